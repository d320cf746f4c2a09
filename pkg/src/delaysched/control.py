"""Delay-aware discretization, LQG synthesis, cost evaluation, and the
maximum-admissible-delay search.

Plant dynamics live in SI units (per-second matrices); the scheduling side
hands over integer-millisecond periods and delays which are converted at
this boundary.  An actuation delay of d within a period T splits the
zero-order hold: the previous input acts for the first d, the fresh input
for the remaining T - d, and the augmented state [x; u_prev] makes the pair
(delayed system, quadratic cost) a standard LQG problem again.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .model import TaskSet, TaskSpec
from .rta import peak_delay, victim_rta

MS_TO_S = 1e-3

FIRST_ORDER = "first_order"
EXACT = "exact"


class ControlSynthesisError(RuntimeError):
    """Riccati divergence or structurally unusable plant."""


@dataclass(frozen=True)
class PlantModel:
    """Continuous LTI plant plus the weights and noise of its control loop.

    ``q_weight`` penalizes the augmented state [x; u_prev] ((n+p) square),
    ``r_weight`` the input (p square, positive definite).  ``cost_threshold``
    of None means "derive as 1.05 x the zero-delay cost".
    """

    name: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    process_noise: np.ndarray
    measurement_noise: np.ndarray
    q_weight: np.ndarray
    r_weight: np.ndarray
    horizon: int = 30
    cost_threshold: float | None = None
    x0: np.ndarray | None = None

    def __post_init__(self):
        for name in ("a", "b", "c", "process_noise", "measurement_noise",
                     "q_weight", "r_weight"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        if self.x0 is not None:
            object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))
        n, p, m = self.n_states, self.n_inputs, self.n_outputs
        if self.a.shape != (n, n) or self.b.shape != (n, p) or self.c.shape != (m, n):
            raise ValueError("inconsistent plant dimensions")
        if self.q_weight.shape != (n + p, n + p):
            raise ValueError(f"q_weight must be {(n + p, n + p)}, got {self.q_weight.shape}")
        if self.r_weight.shape != (p, p):
            raise ValueError(f"r_weight must be {(p, p)}")
        if self.process_noise.shape != (n, n) or self.measurement_noise.shape != (m, m):
            raise ValueError("noise covariances must be n x n and m x m")

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.c.shape[0]

    def initial_state(self) -> np.ndarray:
        if self.x0 is None:
            return np.zeros(self.n_states)
        return self.x0.copy()


@dataclass(frozen=True)
class AugmentedSystem:
    """Discretized plant with the one-sample input split at ``delay``.

    phi_aug = [[phi, gamma1], [0, 0]], gamma_aug = [gamma0; I],
    c_aug = [c, 0]; the augmented state is z = [x; u_prev].
    """

    period: float
    delay: float
    mode: str
    phi: np.ndarray
    gamma0: np.ndarray
    gamma1: np.ndarray
    phi_aug: np.ndarray
    gamma_aug: np.ndarray
    c_aug: np.ndarray


@dataclass(frozen=True)
class ControllerGains:
    """State-feedback gain on [x; u_prev] and the padded estimator gain."""

    k_aug: np.ndarray
    l_aug: np.ndarray
    innovation_cov: np.ndarray


def _hold_integral(a: np.ndarray, b: np.ndarray, upto: float) -> np.ndarray:
    """integral_0^upto exp(a s) b ds via the block-matrix exponential."""
    n, p = b.shape
    if upto == 0.0:
        return np.zeros((n, p))
    block = np.zeros((n + p, n + p))
    block[:n, :n] = a
    block[:n, n:] = b
    return expm(block * upto)[:n, n:]


def discretize_with_delay(plant: PlantModel, period: float, delay: float,
                          mode: str = FIRST_ORDER) -> AugmentedSystem:
    """Discretize at ``period`` with actuation delay ``delay`` (same time unit
    as the plant matrices, i.e. seconds for the shipped plants).

    First-order mode applies the small-delay rule phi = I + a*T,
    gamma0 = (T - delay)*b, gamma1 = delay*b.  Exact mode integrates the
    matrix exponential and is kept for error measurement.  The delay may
    equal the period (hold boundary: the fresh input lands exactly at the
    next sample), anything beyond is an error.
    """
    if not 0 <= delay <= period:
        raise ValueError(f"delay {delay} outside [0, period={period}]")
    n, p = plant.n_states, plant.n_inputs
    if mode == FIRST_ORDER:
        phi = np.eye(n) + plant.a * period
        gamma0 = (period - delay) * plant.b
        gamma1 = delay * plant.b
    elif mode == EXACT:
        phi = expm(plant.a * period)
        total = _hold_integral(plant.a, plant.b, period)
        gamma0 = _hold_integral(plant.a, plant.b, period - delay)
        gamma1 = total - gamma0
    else:
        raise ValueError(f"unknown discretization mode {mode!r}")
    phi_aug = np.zeros((n + p, n + p))
    phi_aug[:n, :n] = phi
    phi_aug[:n, n:] = gamma1
    gamma_aug = np.vstack([gamma0, np.eye(p)])
    c_aug = np.hstack([plant.c, np.zeros((plant.n_outputs, p))])
    return AugmentedSystem(period, delay, mode, phi, gamma0, gamma1,
                           phi_aug, gamma_aug, c_aug)


def _finite_horizon_lqr(phi: np.ndarray, gamma: np.ndarray, q: np.ndarray,
                        r: np.ndarray, horizon: int) -> np.ndarray:
    """Backward Riccati recursion with terminal weight q; returns the gain at
    the start of the horizon.  The cost-to-go matrix is re-symmetrized each
    step and checked for blow-up."""
    p_mat = q.copy()
    k = np.zeros((gamma.shape[1], phi.shape[0]))
    for _ in range(horizon):
        gpg = gamma.T @ p_mat @ gamma + r
        k = np.linalg.solve(gpg, gamma.T @ p_mat @ phi)
        p_mat = q + phi.T @ p_mat @ phi - phi.T @ p_mat @ gamma @ k
        p_mat = 0.5 * (p_mat + p_mat.T)
        if not np.all(np.isfinite(p_mat)) or np.linalg.norm(p_mat) > 1e14:
            raise ControlSynthesisError("LQR Riccati recursion diverged")
        if np.min(np.linalg.eigvalsh(p_mat)) < -1e-6 * max(1.0, np.linalg.norm(p_mat)):
            raise ControlSynthesisError("LQR cost-to-go lost positive semidefiniteness")
    return k


def _steady_kalman(phi: np.ndarray, c: np.ndarray, w: np.ndarray, v: np.ndarray,
                   tol: float = 1e-12, max_iter: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Steady-state one-step (predictor) Kalman gain for x+ = phi x + w,
    y = c x + v.  Returns (gain, innovation covariance)."""
    n = phi.shape[0]
    if not w.any() and not v.any():
        return np.zeros((n, c.shape[0])), np.zeros((c.shape[0], c.shape[0]))
    p_mat = w.copy()
    for _ in range(max_iter):
        s = c @ p_mat @ c.T + v
        try:
            gain = np.linalg.solve(s, (phi @ p_mat @ c.T).T).T
        except np.linalg.LinAlgError as exc:
            raise ControlSynthesisError("singular innovation covariance") from exc
        nxt = phi @ p_mat @ phi.T - gain @ s @ gain.T + w
        nxt = 0.5 * (nxt + nxt.T)
        if not np.all(np.isfinite(nxt)) or np.linalg.norm(nxt) > 1e14:
            raise ControlSynthesisError("Kalman Riccati iteration diverged")
        if np.max(np.abs(nxt - p_mat)) < tol:
            p_mat = nxt
            break
        p_mat = nxt
    s = c @ p_mat @ c.T + v
    gain = np.linalg.solve(s, (phi @ p_mat @ c.T).T).T
    return gain, s


def synthesize_gains(sys: AugmentedSystem, plant: PlantModel) -> ControllerGains:
    """LQG design on the augmented delayed model.

    Feedback gain from the finite-horizon Riccati recursion over the plant's
    horizon; estimator gain from the steady-state filter on the unaugmented
    plant, padded with zero rows for the u_prev component (which the
    estimator knows exactly).
    """
    k_aug = _finite_horizon_lqr(sys.phi_aug, sys.gamma_aug, plant.q_weight,
                                plant.r_weight, plant.horizon)
    l_gain, innov = _steady_kalman(sys.phi, plant.c, plant.process_noise,
                                   plant.measurement_noise)
    l_aug = np.vstack([l_gain, np.zeros((plant.n_inputs, plant.n_outputs))])
    return ControllerGains(k_aug, l_aug, innov)


def closed_loop_cost(sys: AugmentedSystem, gains: ControllerGains,
                     plant: PlantModel, seed: int, noise: bool = True) -> float:
    """Accumulated quadratic cost of one seeded rollout of the estimator /
    feedback loop over the plant's horizon (horizon + 1 stage costs).

    Deterministic given (inputs, seed); ``noise=False`` forces the exact
    noise-free trajectory regardless of the plant covariances.
    """
    if plant.horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    n, p, m = plant.n_states, plant.n_inputs, plant.n_outputs
    use_noise = noise and (plant.process_noise.any() or plant.measurement_noise.any())
    if use_noise:
        w_chol = np.linalg.cholesky(plant.process_noise + 1e-18 * np.eye(n))
        v_chol = np.linalg.cholesky(plant.measurement_noise + 1e-18 * np.eye(m))
    z = np.concatenate([plant.initial_state(), np.zeros(p)])
    z_hat = z.copy()
    cost = 0.0
    for _ in range(plant.horizon + 1):
        u = -gains.k_aug @ z_hat
        cost += float(z @ plant.q_weight @ z + u @ plant.r_weight @ u)
        v = v_chol @ rng.standard_normal(m) if use_noise else np.zeros(m)
        y = sys.c_aug @ z + v
        innovation = y - sys.c_aug @ z_hat
        z_hat = sys.phi_aug @ z_hat + sys.gamma_aug @ u + gains.l_aug @ innovation
        w = w_chol @ rng.standard_normal(n) if use_noise else np.zeros(n)
        z = sys.phi_aug @ z + sys.gamma_aug @ u + np.concatenate([w, np.zeros(p)])
    return cost


def average_cost(sys: AugmentedSystem, gains: ControllerGains, plant: PlantModel,
                 base_seed: int = 0, rollouts: int = 20, noise: bool = True) -> float:
    """Fixed-seed Monte Carlo mean of ``closed_loop_cost`` over ``rollouts``
    consecutive seeds (common random numbers across designs under test)."""
    return float(np.mean([
        closed_loop_cost(sys, gains, plant, base_seed + i, noise=noise)
        for i in range(rollouts)
    ]))


def closed_loop_spectral_radius(sys: AugmentedSystem, gains: ControllerGains) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(sys.phi_aug - sys.gamma_aug @ gains.k_aug))))


def actuation_delay_ms(victim: TaskSpec, taskset: TaskSet, delta: int) -> int | None:
    """Worst-case sample-to-actuation delay under a uniform job delay: the
    release offset plus the largest per-job response bound; None when any
    job misses its effective deadline."""
    result = victim_rta(victim, taskset, delta)
    if not result.feasible:
        return None
    return delta + max(r for _, r in result.per_job_wcrt)


def delay_aware_design(plant: PlantModel, victim: TaskSpec, taskset: TaskSet,
                       delta: int, mode: str = FIRST_ORDER
                       ) -> tuple[AugmentedSystem, ControllerGains] | None:
    """Discretize + synthesize for the actuation delay induced by a uniform
    job delay ``delta`` (ms); None when the delay is unschedulable."""
    lag = actuation_delay_ms(victim, taskset, delta)
    if lag is None:
        return None
    sys = discretize_with_delay(plant, victim.period_ms * MS_TO_S, lag * MS_TO_S, mode)
    return sys, synthesize_gains(sys, plant)


def max_admissible_delay(plant: PlantModel, victim: TaskSpec, taskset: TaskSet,
                         cost_threshold: float | None = None,
                         base_seed: int = 0, rollouts: int = 20,
                         mode: str = FIRST_ORDER) -> int | None:
    """Largest uniform job delay in [0, peak] whose delay-aware closed-loop
    cost stays at or below the threshold; None when even zero delay violates
    it.

    The threshold defaults to the plant's ``cost_threshold``, and failing
    that to 1.05 x the zero-delay cost.  Costs are fixed-seed Monte Carlo
    means, so the scan is reproducible.
    """
    peak = peak_delay(victim, taskset)
    if peak is None:
        return None
    threshold = cost_threshold if cost_threshold is not None else plant.cost_threshold
    if threshold is None:
        design = delay_aware_design(plant, victim, taskset, 0, mode)
        if design is None:
            return None
        threshold = 1.05 * average_cost(*design, plant, base_seed, rollouts)
    for delta in range(peak, -1, -1):
        design = delay_aware_design(plant, victim, taskset, delta, mode)
        if design is None:
            continue
        if average_cost(*design, plant, base_seed, rollouts) <= threshold:
            return delta
    return None


# --- plant files -------------------------------------------------------------

_PLANT_FIELDS = {
    "name", "a", "b", "c", "process_noise", "measurement_noise",
    "q_weight", "r_weight", "horizon", "cost_threshold", "x0",
}


def parse_plant(doc: dict) -> PlantModel:
    unknown = set(doc) - _PLANT_FIELDS
    if unknown:
        raise ValueError(f"unknown plant fields: {sorted(unknown)}")
    return PlantModel(
        name=doc.get("name", "plant"),
        a=doc["a"], b=doc["b"], c=doc["c"],
        process_noise=doc["process_noise"],
        measurement_noise=doc["measurement_noise"],
        q_weight=doc["q_weight"], r_weight=doc["r_weight"],
        horizon=int(doc.get("horizon", 30)),
        cost_threshold=doc.get("cost_threshold"),
        x0=doc.get("x0"),
    )


def plant_to_doc(plant: PlantModel) -> dict:
    return {
        "name": plant.name,
        "a": plant.a.tolist(),
        "b": plant.b.tolist(),
        "c": plant.c.tolist(),
        "process_noise": plant.process_noise.tolist(),
        "measurement_noise": plant.measurement_noise.tolist(),
        "q_weight": plant.q_weight.tolist(),
        "r_weight": plant.r_weight.tolist(),
        "horizon": plant.horizon,
        "cost_threshold": plant.cost_threshold,
        "x0": None if plant.x0 is None else plant.x0.tolist(),
    }


def load_plants(path: str | Path) -> dict[int, PlantModel]:
    """Plant file: {"plants": {task_id: plant-object}}."""
    with open(path) as fh:
        doc = json.load(fh)
    if "plants" not in doc:
        raise ValueError("plant file must carry a 'plants' object keyed by task id")
    return {int(tid): parse_plant(p) for tid, p in doc["plants"].items()}


def save_plants(plants: dict[int, PlantModel], path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump({"plants": {str(t): plant_to_doc(p) for t, p in plants.items()}}, fh, indent=2)
        fh.write("\n")
