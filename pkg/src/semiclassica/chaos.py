"""Poincaré sections, Benettin Lyapunov exponents and chaos-onset scans."""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from . import _accel, kernels
from .dynamics import DEFAULT_DT, energy_of
from .effective import epsilon_convex_max
from .errors import InvalidParameterError, NonConvexDomainError
from .model import PhaseState

SECTION_TOL = 1e-10

# purpose codes mixed into the seed so different streams never collide
PURPOSE_SHELL = 1
PURPOSE_SCAN = 2


@dataclass(frozen=True)
class SectionPoint:
    q1: float
    p1: float
    crossing_time: float
    direction: int = 1


@dataclass
class PoincareSection:
    """Crossings of the plane ``q2 = 0`` with ``p2 > 0``.

    ``points`` has columns ``q1, p1, t, p2``. ``status`` is ``"ok"`` unless
    the trajectory left the domain or diverged, in which case the points
    found up to ``t_end`` are kept.
    """

    points: np.ndarray
    status: str
    t_end: float
    gamma: float

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[SectionPoint]:
        for q1, p1, t, _ in self.points:
            yield SectionPoint(float(q1), float(p1), float(t), 1)

    def __getitem__(self, i) -> SectionPoint:
        q1, p1, t, _ = self.points[i]
        return SectionPoint(float(q1), float(p1), float(t), 1)

    @property
    def energies(self) -> np.ndarray:
        q1, p1, _, p2 = self.points.T
        st = np.stack([q1, np.zeros_like(q1), p1, p2], axis=1)
        return energy_of(st, self.gamma)

    @property
    def energy_spread(self) -> float:
        e = self.energies
        if e.size < 2:
            return 0.0
        return float((e.max() - e.min()) / max(abs(e[0]), 1e-300))

    def occupancy(self, bins: int = 32, extent: float | None = None) -> int:
        """Number of occupied cells of a ``bins x bins`` grid over ``(q1, p1)``."""
        if len(self.points) == 0:
            return 0
        if extent is None:
            extent = float(np.max(np.abs(self.points[:, :2]))) * (1 + 1e-12)
        h, _, _ = np.histogram2d(
            self.points[:, 0], self.points[:, 1], bins=bins, range=[[-extent, extent]] * 2
        )
        return int(np.count_nonzero(h))


@dataclass
class LyapunovEstimate:
    lambda_max: float
    history: np.ndarray
    t_total: float
    renorm_interval: float
    valid: bool = True
    status: str = "ok"

    @property
    def times(self) -> np.ndarray:
        return self.renorm_interval * np.arange(1, len(self.history) + 1)


@dataclass(frozen=True)
class ClassifierConfig:
    """Regular/chaotic classification and threshold-bisection settings.

    ``energy`` selects how the shell energy of an initial condition is
    measured for the effective flow: ``"classical"`` (default) or
    ``"effective"``.
    """

    lambda_threshold: float = 5e-3
    t_total: float = 2e4
    dt: float = DEFAULT_DT
    d0: float = 1e-8
    renorm_interval: float = 1.0
    n_samples: int = 32
    rel_tol: float = 0.02
    bracket_lo: float = 0.1
    bracket_hi_factor: float = 10.0
    energy: str = "classical"

    def __post_init__(self):
        if self.energy not in ("classical", "effective"):
            raise InvalidParameterError(f"unknown energy convention {self.energy!r}")
        for name in ("lambda_threshold", "t_total", "dt", "d0", "renorm_interval", "rel_tol"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.n_samples < 1:
            raise InvalidParameterError("n_samples must be >= 1")
        _steps_per(self.renorm_interval, self.dt)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_total / self.dt))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class ShellClassification:
    """Per-orbit result of classifying a batch of initial conditions."""

    epsilon: float
    gamma: float
    ics: np.ndarray
    lambdas: np.ndarray
    chaotic: np.ndarray
    valid: np.ndarray

    @property
    def regular_fraction(self) -> float:
        n = int(self.valid.sum())
        if n == 0:
            return math.nan
        return float(np.count_nonzero(self.valid & ~self.chaotic) / n)


@dataclass
class ThresholdCurve:
    gammas: np.ndarray
    eps_th: np.ndarray
    eps_convex: np.ndarray
    classifier: dict
    diagnostics: list = field(default_factory=list)
    rungs: list = field(default_factory=list)

    def reference(self) -> np.ndarray:
        """``eps_th(0) (1 + gamma)**2``, NaN when no gamma = 0 entry exists."""
        zero = np.nonzero(self.gammas == 0.0)[0]
        base = self.eps_th[zero[0]] if zero.size else math.nan
        return base * (1.0 + self.gammas) ** 2

    def ratios(self) -> np.ndarray:
        zero = np.nonzero(self.gammas == 0.0)[0]
        base = self.eps_th[zero[0]] if zero.size else math.nan
        return self.eps_th / base


def _steps_per(interval: float, dt: float) -> int:
    k = int(round(interval / dt))
    if k < 1 or abs(k * dt - interval) > 1e-9 * interval:
        raise InvalidParameterError("renorm_interval must be a positive multiple of dt")
    return k


def _kind_gamma(kind: str, gamma: float) -> float:
    if kind == "classical":
        return 0.0
    if kind == "effective":
        if gamma < 0:
            raise InvalidParameterError("gamma must be nonnegative")
        return float(gamma)
    raise InvalidParameterError(f"unknown rhs kind {kind!r}")


def _state(s0) -> np.ndarray:
    arr = s0.as_array() if isinstance(s0, PhaseState) else np.asarray(s0, dtype=float)
    if arr.shape != (4,) or not np.all(np.isfinite(arr)):
        raise InvalidParameterError("initial state must be 4 finite numbers")
    return arr


def _check_domain(y, g):
    if g != 0.0 and not kernels.lambda_minus(y[0], y[1]) > 0:
        raise NonConvexDomainError("initial point outside Lambda_- > 0", point=(y[0], y[1]))


def _use_nb(use_numba):
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    return bool(use_numba and _accel.HAVE_NUMBA)


_STATUS = {kernels.OK: "ok", kernels.DOMAIN_EXIT: "domain_exit", kernels.NONFINITE: "nonfinite"}


# --- sections -------------------------------------------------------------


def poincare_section(
    kind: str,
    s0,
    gamma: float = 0.0,
    t_total: float = 1e3,
    dt: float = DEFAULT_DT,
    *,
    tol: float = SECTION_TOL,
    max_points: int | None = None,
    swap: bool = False,
    use_numba: bool | None = None,
) -> PoincareSection:
    """Surface of section of one orbit.

    With ``swap=True`` the companion plane ``q1 = 0, p1 > 0`` is used and
    the points are reported as ``(q2, p2)``.
    """
    g = _kind_gamma(kind, gamma)
    y0 = _state(s0)
    if swap:
        y0 = y0[[1, 0, 3, 2]]
    _check_domain(y0, g)
    n_steps = int(round(t_total / dt))
    if max_points is None:
        # a crossing needs at least ~one period, and periods exceed ~pi/4 here
        max_points = int(t_total / 0.5) + 16
    if _use_nb(use_numba):
        out = np.empty((max_points, 4))
        st, n, steps = kernels._section_nb(y0, g, dt, n_steps, tol, out)
        pts = out[:n].copy()
    else:
        found, st_a, step_a = kernels.section_batch_np(y0[None, :], g, dt, n_steps, tol)
        pts, st, steps = found[0][:max_points], int(st_a[0]), int(step_a[0])
    return PoincareSection(pts, _STATUS[int(st)], steps * dt, g)


# --- Lyapunov ------------------------------------------------------------


def _history(logs: np.ndarray, interval: float) -> np.ndarray:
    return np.cumsum(logs) / (interval * np.arange(1, len(logs) + 1))


def lyapunov_max(
    kind: str,
    s0,
    gamma: float = 0.0,
    t_total: float = 1e4,
    renorm_interval: float = 1.0,
    d0: float = 1e-8,
    dt: float = DEFAULT_DT,
    *,
    use_numba: bool | None = None,
) -> LyapunovEstimate:
    """Largest Lyapunov exponent by the two-trajectory (Benettin) method.

    The shadow starts at ``s0 + d0/2 * (1, 1, 1, 1)`` and is pulled back to
    distance ``d0`` every ``renorm_interval``.
    """
    g = _kind_gamma(kind, gamma)
    y0 = _state(s0)
    _check_domain(y0, g)
    if not d0 > 0:
        raise InvalidParameterError("d0 must be positive")
    k = _steps_per(renorm_interval, dt)
    n_steps = int(round(t_total / dt))
    if _use_nb(use_numba):
        logs = np.empty(n_steps // k)
        st, cnt = kernels._benettin_nb(y0, g, dt, n_steps, k, d0, logs)
        logs = logs[:cnt]
    else:
        logs_a, st_a, cnt_a = kernels.benettin_batch_np(y0[None, :], g, dt, n_steps, k, d0)
        st, cnt = int(st_a[0]), int(cnt_a[0])
        logs = logs_a[0, :cnt]
    hist = _history(logs, renorm_interval)
    lam = float(hist[-1]) if hist.size else math.nan
    return LyapunovEstimate(lam, hist, t_total, renorm_interval, st == kernels.OK, _STATUS[int(st)])


def _lyap_one_nb(y0, g, dt, n_steps, k, d0):
    logs = np.empty(n_steps // k)
    st, cnt = kernels._benettin_nb(y0, g, dt, n_steps, k, d0, logs)
    if st != kernels.OK or cnt == 0:
        return math.nan
    return float(np.sum(logs[:cnt]) / (cnt * k * dt))


def lyapunov_batch(
    states: np.ndarray,
    gamma: float,
    cfg: ClassifierConfig = ClassifierConfig(),
    *,
    threads: int = 1,
    use_numba: bool | None = None,
    stop_when: Callable[[float], bool] | None = None,
) -> np.ndarray:
    """Final Lyapunov estimates for many orbits (NaN for orbits that left the domain).

    Orbits are processed in index order, ``threads`` at a time. If
    ``stop_when`` is given, the remaining orbits are skipped (left as NaN
    with ``-inf`` marker) once a finished orbit satisfies it; the decision
    is made after whole chunks in index order. Results past the first
    orbit meeting ``stop_when`` are discarded, so the returned array does
    not depend on ``threads``.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    g = float(gamma)
    k = _steps_per(cfg.renorm_interval, cfg.dt)
    n_steps = cfg.n_steps
    n = len(states)
    lam = np.full(n, -math.inf)
    if threads < 1:
        raise InvalidParameterError("threads must be >= 1")

    if not _use_nb(use_numba):
        chunk = n if stop_when is None else max(threads, 1)
        for start in range(0, n, chunk):
            sl = slice(start, min(start + chunk, n))
            logs, st, cnt = kernels.benettin_batch_np(states[sl], g, cfg.dt, n_steps, k, cfg.d0)
            for j, i in enumerate(range(sl.start, sl.stop)):
                lam[i] = (
                    float(np.sum(logs[j, : cnt[j]]) / (cnt[j] * k * cfg.dt))
                    if st[j] == kernels.OK and cnt[j] > 0
                    else math.nan
                )
            if stop_when is not None and any(stop_when(x) for x in lam[sl]):
                break
        return _truncate(lam, stop_when)

    def run(i):
        return _lyap_one_nb(states[i], g, cfg.dt, n_steps, k, cfg.d0)

    if threads == 1:
        for i in range(n):
            lam[i] = run(i)
            if stop_when is not None and stop_when(lam[i]):
                break
        return lam
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for start in range(0, n, threads):
            idx = list(range(start, min(start + threads, n)))
            for i, val in zip(idx, pool.map(run, idx)):
                lam[i] = val
            if stop_when is not None and any(stop_when(lam[i]) for i in idx):
                break
    return _truncate(lam, stop_when)


def _truncate(lam, stop_when):
    if stop_when is not None:
        for i, x in enumerate(lam):
            if x != -math.inf and stop_when(x):
                lam[i + 1 :] = -math.inf
                break
    return lam


# --- shell sampling ---------------------------------------------------------


def _float_key(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def ic_rng(seed: int, purpose: int, gamma: float, epsilon: float) -> np.random.Generator:
    """Generator for one (seed, purpose, gamma, epsilon) stream."""
    ss = np.random.SeedSequence([int(seed), int(purpose), _float_key(gamma), _float_key(epsilon)])
    return np.random.Generator(np.random.PCG64(ss))


def _shell_p2(q1, p1, epsilon, gamma, energy):
    """Velocity ``p2`` putting ``(q1, 0, p1, p2)`` on the shell, NaN if none."""
    if energy == "classical" or gamma == 0.0:
        rad = 2.0 * (epsilon - 0.5 * q1 * q1) - p1 * p1
        return np.where(rad > 0, np.sqrt(np.maximum(rad, 0.0)), np.nan)
    z11, _, z22 = kernels.kinetic_matrix(q1, 0.0 * q1, gamma)
    ve = kernels.effective_potential(q1, 0.0 * q1, gamma)
    rad = (2.0 * (epsilon - ve) - z11 * p1 * p1) / z22
    return np.where(rad > 0, np.sqrt(np.maximum(rad, 0.0)), np.nan)


def sample_section_ics(
    epsilon: float,
    gamma: float = 0.0,
    n: int = 32,
    seed: int = 0,
    *,
    energy: str = "classical",
    purpose: int = PURPOSE_SHELL,
) -> np.ndarray:
    """Initial conditions uniform on the allowed ``(q1, p1)`` region of the slice.

    Candidates are drawn uniformly from the box ``|q1|, |p1| <= sqrt(2 eps)``
    (which contains the allowed region for both energy conventions) and
    rejected unless ``p2`` comes out real and positive. Returns ``(n, 4)``.
    """
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be positive (empty shell otherwise)")
    if gamma < 0:
        raise InvalidParameterError("gamma must be nonnegative")
    rng = ic_rng(seed, purpose, gamma, epsilon)
    half = math.sqrt(2.0 * epsilon)
    out = np.empty((0, 4))
    for _ in range(1000):
        cand = rng.uniform(-half, half, size=(max(2 * n, 64), 2))
        p2 = _shell_p2(cand[:, 0], cand[:, 1], epsilon, gamma, energy)
        ok = np.isfinite(p2)
        batch = np.column_stack([cand[ok, 0], np.zeros(ok.sum()), cand[ok, 1], p2[ok]])
        out = np.vstack([out, batch])
        if len(out) >= n:
            return out[:n]
    raise InvalidParameterError(f"could not sample the shell at epsilon={epsilon}")


def classify_shell(
    epsilon: float,
    gamma: float,
    n_samples: int,
    cfg: ClassifierConfig = ClassifierConfig(),
    *,
    seed: int = 0,
    threads: int = 1,
    purpose: int = PURPOSE_SHELL,
    stop_at_first_chaotic: bool = False,
    use_numba: bool | None = None,
) -> ShellClassification:
    ics = sample_section_ics(epsilon, gamma, n_samples, seed, energy=cfg.energy, purpose=purpose)
    stop = (lambda lam: lam > cfg.lambda_threshold) if stop_at_first_chaotic else None
    lam = lyapunov_batch(ics, gamma, cfg, threads=threads, use_numba=use_numba, stop_when=stop)
    evaluated = lam != -math.inf
    valid = evaluated & np.isfinite(lam)
    chaotic = valid & (lam > cfg.lambda_threshold)
    return ShellClassification(epsilon, gamma, ics, lam, chaotic, valid)


def regular_fraction(
    epsilon: float,
    gamma: float = 0.0,
    n_samples: int = 100,
    cfg: ClassifierConfig = ClassifierConfig(),
    *,
    seed: int = 0,
    threads: int = 1,
    use_numba: bool | None = None,
) -> float:
    """Share of sampled shell orbits whose Lyapunov estimate stays below threshold.

    Orbits that leave the effective domain are left out of the count.
    """
    res = classify_shell(
        epsilon, gamma, n_samples, cfg, seed=seed, threads=threads, use_numba=use_numba
    )
    return res.regular_fraction


# --- threshold scan --------------------------------------------------------


def _rung(eps, gamma, cfg, seed, threads, use_numba, log):
    res = classify_shell(
        eps,
        gamma,
        cfg.n_samples,
        cfg,
        seed=seed,
        threads=threads,
        purpose=PURPOSE_SCAN,
        stop_at_first_chaotic=True,
        use_numba=use_numba,
    )
    chaotic = bool(res.chaotic.any())
    entry = {
        "gamma": gamma,
        "epsilon": eps,
        "chaotic": chaotic,
        "n_evaluated": int(np.count_nonzero(res.lambdas != -math.inf)),
        "n_invalid": int(np.count_nonzero((res.lambdas != -math.inf) & ~res.valid)),
        "lambda_max": float(np.nanmax(np.where(res.valid, res.lambdas, np.nan)))
        if res.valid.any()
        else math.nan,
    }
    log.append(entry)
    return chaotic


def find_threshold(
    gamma: float,
    cfg: ClassifierConfig = ClassifierConfig(),
    *,
    seed: int = 0,
    threads: int = 1,
    use_numba: bool | None = None,
    progress: Callable[[dict], None] | None = None,
) -> tuple[float, list, str | None]:
    """Geometric bisection for the lowest chaotic energy at one ``gamma``.

    Returns ``(eps_th, rungs, diagnostic)``; ``eps_th`` is the upper end of
    the final bracket, the lowest energy actually seen chaotic.
    """
    log: list = []

    def rung(eps):
        out = _rung(eps, gamma, cfg, seed, threads, use_numba, log)
        if progress is not None:
            progress(log[-1])
        return out

    lo = cfg.bracket_lo
    hi = cfg.bracket_hi_factor * (1.0 + gamma) ** 2
    if rung(lo):
        return math.nan, log, f"chaotic already at bracket low end {lo:g}"
    note = None
    # orbits that leave the effective domain cannot be classified; search
    # geometrically below an unclassifiable top for a chaotic rung, raising
    # lo past fully valid regular rungs
    top = hi
    while not rung(hi):
        if log[-1]["n_invalid"] == 0 and hi == top:
            return math.nan, log, f"no chaos found at bracket high end {hi:g}"
        if log[-1]["n_invalid"] == 0:
            lo = hi
        else:
            top = hi
        if (top - lo) / top < cfg.rel_tol:
            return math.nan, log, f"no classifiable chaos below {top:g}: orbits left the effective domain"
        hi = math.sqrt(lo * top)
        note = f"bracket high end lowered to {hi:g}: orbits left the effective domain"
    while (hi - lo) / hi >= cfg.rel_tol:
        mid = math.sqrt(lo * hi)
        if rung(mid):
            hi = mid
        else:
            lo = mid
    return hi, log, note


def threshold_scan(
    gammas: Sequence[float],
    cfg: ClassifierConfig = ClassifierConfig(),
    *,
    seed: int = 0,
    threads: int = 1,
    convex: bool = True,
    use_numba: bool | None = None,
    progress: Callable[[dict], None] | None = None,
) -> ThresholdCurve:
    """Chaos-onset energy and convexity bound for each ``gamma``."""
    gammas = np.asarray(gammas, dtype=float)
    if np.any(gammas < 0):
        raise InvalidParameterError("gammas must be nonnegative")
    eps_th = np.full(gammas.size, math.nan)
    eps_cv = np.full(gammas.size, math.nan)
    diags, rungs = [], []
    for i, g in enumerate(gammas):
        eps_th[i], log, diag = find_threshold(
            float(g), cfg, seed=seed, threads=threads, use_numba=use_numba, progress=progress
        )
        rungs.extend(log)
        if diag is not None:
            diags.append({"gamma": float(g), "message": diag})
        if convex:
            eps_cv[i] = epsilon_convex_max(float(g))
    return ThresholdCurve(gammas, eps_th, eps_cv, cfg.as_dict(), diags, rungs)
