"""Fixed-step RK4 integration of the classical and effective flows."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import _accel, kernels
from .errors import IntegrationError, InvalidParameterError, TrajectoryTerminated
from .model import PhaseState

DEFAULT_DT = 1e-3
SINGULAR_Z = 1e-12

RHS = Union[str, Callable]


@dataclass
class Trajectory:
    t0: float
    dt: float
    states: np.ndarray
    energy_audit: np.ndarray
    kind: str = "classical"
    gamma: float = 0.0
    stride: int = 1
    status: str = "ok"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.energy_audit = np.asarray(self.energy_audit, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != 4 or len(self.states) == 0:
            raise InvalidParameterError("states must be a nonempty (n, 4) array")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * self.stride * np.arange(len(self.states))

    @property
    def energy_drift(self) -> float:
        e0 = self.energy_audit[0]
        scale = abs(e0) if e0 != 0 else 1.0
        return float(np.max(np.abs(self.energy_audit - e0)) / scale)

    def state(self, i: int) -> PhaseState:
        return PhaseState.from_array(self.states[i])

    def to_csv(self, fh, header_lines: Sequence[str] = ()) -> None:
        write_trajectory_csv(self, fh, header_lines)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "gamma": self.gamma,
            "t0": self.t0,
            "dt": self.dt,
            "stride": self.stride,
            "status": self.status,
            "columns": ["t", "q1", "q2", "p1", "p2", "E"],
            "rows": [
                [float(_fmt(x)) for x in (t, *s, e)]
                for t, s, e in zip(self.times, self.states, self.energy_audit)
            ],
        }


def _fmt(x: float) -> str:
    return f"{x:.15g}"


def write_trajectory_csv(traj: Trajectory, fh, header_lines: Sequence[str] = ()) -> None:
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "q1", "q2", "p1", "p2", "E"])
    for t, s, e in zip(traj.times, traj.states, traj.energy_audit):
        w.writerow([_fmt(t), *(_fmt(x) for x in s), _fmt(e)])


def read_trajectory_csv(fh) -> np.ndarray:
    """Parse a trajectory CSV (comment lines skipped) into an ``(n, 6)`` array."""
    rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(io.StringIO("".join(rows)))
    header = next(reader)
    if header != ["t", "q1", "q2", "p1", "p2", "E"]:
        raise InvalidParameterError(f"unexpected trajectory header {header}")
    return np.array([[float(x) for x in r] for r in reader], dtype=float)


def classical_rhs(s: PhaseState) -> np.ndarray:
    a1, a2 = kernels.classical_accel(s.q1, s.q2)
    return np.array([s.p1, s.p2, a1, a2])


def effective_rhs(s: PhaseState, gamma: float) -> np.ndarray:
    """Phase-space derivative of the effective flow, ``p`` read as velocities."""
    if gamma == 0:
        return classical_rhs(s)
    (z11, z12, z22, *_rest) = kernels.geometry(s.q1, s.q2, gamma)
    lm = _rest[-1]
    if not lm > 0:
        raise TrajectoryTerminated(
            f"Lambda_- = {lm:g} <= 0 at ({s.q1:g}, {s.q2:g})", point=(s.q1, s.q2)
        )
    if abs(z11 * z22 - z12 * z12) < SINGULAR_Z:
        raise IntegrationError("kinetic matrix is singular")
    a1, a2, _ = kernels.effective_accel(s.q1, s.q2, s.p1, s.p2, gamma)
    return np.array([s.p1, s.p2, a1, a2])


def effective_energy(s: PhaseState, gamma: float) -> float:
    """Conserved energy ``Z_ij v_i v_j / 2 + V_e`` of the effective Lagrangian."""
    if gamma == 0:
        return float(kernels.classical_energy(s.q1, s.q2, s.p1, s.p2))
    lm = kernels.lambda_minus(s.q1, s.q2)
    if not lm > 0:
        raise TrajectoryTerminated(f"Lambda_- = {lm:g} <= 0", point=(s.q1, s.q2))
    return float(kernels.effective_energy(s.q1, s.q2, s.p1, s.p2, gamma))


def energy_of(states: np.ndarray, gamma: float) -> np.ndarray:
    q1, q2, p1, p2 = (states[..., k] for k in range(4))
    if gamma == 0:
        return kernels.classical_energy(q1, q2, p1, p2)
    with np.errstate(invalid="ignore"):
        return kernels.effective_energy(q1, q2, p1, p2, gamma)


def _resolve(rhs: RHS, gamma: float):
    if rhs in ("classical", classical_rhs):
        return "classical", 0.0
    if rhs in ("effective", effective_rhs):
        return "effective", float(gamma)
    if callable(rhs):
        return "custom", float(gamma)
    raise InvalidParameterError(f"unknown rhs {rhs!r}")


def _as_array(s0) -> np.ndarray:
    if isinstance(s0, PhaseState):
        return s0.as_array()
    arr = np.asarray(s0, dtype=float)
    if arr.shape != (4,):
        raise InvalidParameterError("initial state must have 4 components")
    return arr


def _generic_rk4(f, y, dt, n_steps, stride):
    out = [y.copy()]
    for i in range(n_steps):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state at step {i}", step=i)
        if (i + 1) % stride == 0:
            out.append(y.copy())
    return np.array(out)


def rk4_integrate(
    rhs: RHS,
    s0,
    dt: float = DEFAULT_DT,
    n_steps: int = 1000,
    *,
    gamma: float = 0.0,
    stride: int = 1,
    t0: float = 0.0,
    use_numba: bool | None = None,
    strict: bool = True,
) -> Trajectory:
    """Integrate ``n_steps`` RK4 steps from ``s0``, keeping every ``stride``-th state.

    ``rhs`` is ``"classical"``, ``"effective"`` (or the matching functions of
    this module, which run on the compiled kernels) or any callable mapping a
    length-4 array to its derivative. With ``strict=False`` a domain exit
    returns the partial trajectory with ``status`` set instead of raising.
    """
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    if n_steps < 0 or stride < 1:
        raise InvalidParameterError("n_steps must be >= 0 and stride >= 1")
    kind, g = _resolve(rhs, gamma)
    y0 = _as_array(s0)

    if kind == "custom":
        states = _generic_rk4(lambda y: np.asarray(rhs(y), dtype=float), y0, dt, n_steps, stride)
        return Trajectory(t0, dt, states, np.full(len(states), np.nan), "custom", g, stride)

    if kind == "effective" and g != 0 and not kernels.lambda_minus(y0[0], y0[1]) > 0:
        raise TrajectoryTerminated("initial point outside Lambda_- > 0", point=tuple(y0[:2]), time=t0)

    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if use_numba and _accel.HAVE_NUMBA:
        out = np.empty((n_steps // stride + 1, 4))
        status, done = kernels._integrate_nb(y0, g, dt, n_steps, stride, out)
        states = out[: done // stride + 1]
    else:
        out, st, step = kernels.integrate_batch_np(y0[None, :], g, dt, n_steps, stride)
        status, done = int(st[0]), int(step[0])
        states = out[0, : done // stride + 1]

    traj = Trajectory(t0, dt, states, energy_of(states, g), kind, g, stride)
    if status != kernels.OK:
        t_exit = t0 + (done + 1) * dt
        traj.status = "domain_exit" if status == kernels.DOMAIN_EXIT else "nonfinite"
        traj.meta.update(exit_step=int(done), exit_time=t_exit)
        if strict:
            if status == kernels.DOMAIN_EXIT:
                raise TrajectoryTerminated(
                    f"left Lambda_- > 0 at t = {t_exit:g}", point=tuple(states[-1, :2]), time=t_exit
                )
            raise IntegrationError(f"non-finite state at step {done}", step=int(done))
    return traj


def integrate_classical(s0, t_total: float, dt: float = DEFAULT_DT, **kw) -> Trajectory:
    return rk4_integrate("classical", s0, dt, int(round(t_total / dt)), **kw)


def integrate_effective(s0, gamma: float, t_total: float, dt: float = DEFAULT_DT, **kw) -> Trajectory:
    return rk4_integrate("effective", s0, dt, int(round(t_total / dt)), gamma=gamma, **kw)


def trajectory_json(traj: Trajectory) -> str:
    return json.dumps(traj.to_json(), sort_keys=True)
