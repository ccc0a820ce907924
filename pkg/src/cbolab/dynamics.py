"""Deterministic particle dynamics driven toward the softmax consensus point.

Each of N particles moves by dx_i/dt = -lam * (x_i - m) where m is the
weighted average of all positions under softmax weights of sharpness alpha.
Two solvers are provided: `simulate`, a fixed-step explicit integrator for any
N, and `reduced_two_particle`, which exploits the exact exponential decay of
the pairwise gap to integrate a single scalar ODE in the gap variable. They
are independent routes to the same limit and are cross-checked in the tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .objective import Objective, softmax_weights

__all__ = [
    "SimConfig",
    "Trajectory",
    "SimOutcome",
    "IntegrationError",
    "step",
    "simulate",
    "reduced_two_particle",
    "analytic_gap",
    "gap_decay_tolerance",
    "first_crossing_time",
    "trajectory_csv",
]

# Explicit steps can leave the objective's domain by rounding-level amounts;
# anything larger signals an unstable dt or a bug and aborts the run.
_DOMAIN_SLACK = 1e-9


class IntegrationError(RuntimeError):
    """A run produced a non-finite state or broke a dynamical invariant."""


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one integration run.

    lam is the drift rate toward the consensus point (the paper-facing config
    key is spelled `lambda`; that is a keyword here). dt defaults to 1e-3/lam
    and t_max to 80/lam so that the default run always reaches gap_tol from
    any order-one initial gap.
    """

    lam: float
    alpha: float
    initial_positions: tuple[float, ...]
    integrator: str = "rk4"
    dt: float | None = None
    gap_tol: float = 1e-10
    t_max: float | None = None
    sample_stride: int = 10

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lam) and self.lam > 0.0):
            raise ValueError(f"lambda must be positive and finite, got {self.lam}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0.0):
            raise ValueError(f"alpha must be nonnegative and finite, got {self.alpha}")
        pos = tuple(float(x) for x in self.initial_positions)
        object.__setattr__(self, "initial_positions", pos)
        if len(pos) < 2:
            raise ValueError("initial_positions needs at least two particles")
        if not all(math.isfinite(x) for x in pos):
            raise ValueError("initial_positions must all be finite")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError(f"integrator must be 'euler' or 'rk4', got {self.integrator!r}")
        if self.dt is not None:
            if not (math.isfinite(self.dt) and self.dt > 0.0):
                raise ValueError(f"dt must be positive, got {self.dt}")
            if self.dt * self.lam >= 1.0:
                raise ValueError(
                    f"dt*lambda = {self.dt * self.lam} violates the stability guard dt*lambda < 1"
                )
        if not (math.isfinite(self.gap_tol) and self.gap_tol > 0.0):
            raise ValueError(f"gap_tol must be positive, got {self.gap_tol}")
        if self.t_max is not None and not (math.isfinite(self.t_max) and self.t_max > 0.0):
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ValueError(f"sample_stride must be a positive integer, got {self.sample_stride}")

    @property
    def dt_value(self) -> float:
        return self.dt if self.dt is not None else 1e-3 / self.lam

    @property
    def t_max_value(self) -> float:
        return self.t_max if self.t_max is not None else 80.0 / self.lam

    def with_alpha(self, alpha: float) -> "SimConfig":
        return replace(self, alpha=alpha)


@dataclass(frozen=True)
class Trajectory:
    """Sampled states of one run: times, positions per time, consensus per time."""

    times: tuple[float, ...]
    states: tuple[tuple[float, ...], ...]
    consensus_values: tuple[float, ...]

    def max_gaps(self) -> tuple[float, ...]:
        return tuple(max(s) - min(s) for s in self.states)


@dataclass(frozen=True)
class SimOutcome:
    x_inf_estimate: float
    final_gap: float
    stop_reason: str  # "gap_converged" or "t_max_reached"
    error_to_minimizer: float | None = None
    trajectory: Trajectory | None = None
    final_positions: tuple[float, ...] = ()
    t_final: float = 0.0
    n_steps: int = 0


def _drift(obj: Objective, alpha: float, xs: list[float], lam: float):
    """Velocities -lam*(x_i - m) and the consensus point m at state xs.

    Objective values are taken as-is (no domain check): integrator stages can
    sit a rounding error outside the domain and every builtin evaluates fine
    there. The consensus point is clamped into the hull of xs so that rounding
    in the weighted sum can never push it outside.
    """
    fvals = [obj.eval(x) for x in xs]
    w = softmax_weights(fvals, alpha)
    m = math.fsum(wi * xi for wi, xi in zip(w, xs))
    lo = min(xs)
    hi = max(xs)
    if m < lo:
        m = lo
    elif m > hi:
        m = hi
    return [lam * (m - x) for x in xs], m


def _euler_step(obj: Objective, alpha: float, lam: float, xs: list[float], dt: float):
    k1, m = _drift(obj, alpha, xs, lam)
    return [x + dt * v for x, v in zip(xs, k1)], m


def _rk4_step(obj: Objective, alpha: float, lam: float, xs: list[float], dt: float):
    k1, m = _drift(obj, alpha, xs, lam)
    y = [x + 0.5 * dt * v for x, v in zip(xs, k1)]
    k2, _ = _drift(obj, alpha, y, lam)
    y = [x + 0.5 * dt * v for x, v in zip(xs, k2)]
    k3, _ = _drift(obj, alpha, y, lam)
    y = [x + dt * v for x, v in zip(xs, k3)]
    k4, _ = _drift(obj, alpha, y, lam)
    xs = [
        x + dt * (a + 2.0 * b + 2.0 * c + d) / 6.0
        for x, a, b, c, d in zip(xs, k1, k2, k3, k4)
    ]
    return xs, m


def step(obj: Objective, cfg: SimConfig, positions) -> list[float]:
    """One explicit integrator step of size cfg.dt_value from the given state."""
    xs = [float(x) for x in positions]
    for x in xs:
        if not obj.contains(x, slack=_DOMAIN_SLACK):
            raise ValueError(f"position {x} outside domain [{obj.domain_lo}, {obj.domain_hi}]")
    stepper = _rk4_step if cfg.integrator == "rk4" else _euler_step
    new, _ = stepper(obj, cfg.alpha, cfg.lam, xs, cfg.dt_value)
    return _police_domain(obj, new)


def _police_domain(obj: Objective, xs: list[float]) -> list[float]:
    """Clamp rounding-level domain excursions; abort on anything larger."""
    lo, hi = obj.domain_lo, obj.domain_hi
    out = []
    for x in xs:
        if x < lo:
            if lo - x > _DOMAIN_SLACK:
                raise IntegrationError(
                    f"particle left the domain: {x} < {lo} by {lo - x:.3e}"
                )
            x = lo
        elif x > hi:
            if x - hi > _DOMAIN_SLACK:
                raise IntegrationError(
                    f"particle left the domain: {x} > {hi} by {x - hi:.3e}"
                )
            x = hi
        out.append(x)
    return out


def analytic_gap(x0_gap: float, lam: float, t: float) -> float:
    """Exact pairwise gap at time t: every gap decays by the factor e^(-lam t)."""
    return x0_gap * math.exp(-lam * t)


def gap_decay_tolerance(integrator: str, gap0: float, lam: float, dt: float) -> float:
    """Acceptance threshold on |gap(t) - gap0 e^(-lam t)| for a given scheme.

    The discrete schemes contract every gap by the same scalar factor per step,
    so the residual is pure one-dimensional truncation error: O((lam dt)^4) per
    unit time for RK4 and O(lam dt) for Euler, with a floor of 1e-8 for
    accumulated rounding on long runs.
    """
    if integrator == "rk4":
        return max(1e-8, 40.0 * gap0 * (lam * dt) ** 4)
    return max(1e-8, 0.5 * gap0 * lam * dt)


def simulate(obj: Objective, cfg: SimConfig, record_trajectory: bool = True) -> SimOutcome:
    """Integrate the N-particle system until the max gap falls below gap_tol.

    Returns the consensus point of the final state as x_inf_estimate (any
    convex combination of the final positions is within gap_tol of the true
    limit once the ensemble has collapsed that far). Dynamical identities
    (exact gap decay, order preservation, uniform bounds, hull containment)
    are asserted at every sampled time; a violation beyond the integrator's
    tolerance raises IntegrationError.
    """
    xs = [float(x) for x in cfg.initial_positions]
    for x in xs:
        if not obj.contains(x):
            raise ValueError(
                f"initial position {x} outside domain [{obj.domain_lo}, {obj.domain_hi}]"
            )

    dt = cfg.dt_value
    t_max = cfg.t_max_value
    lam = cfg.lam
    alpha = cfg.alpha
    stepper = _rk4_step if cfg.integrator == "rk4" else _euler_step

    n = len(xs)
    mean0 = math.fsum(xs) / n
    gap0 = max(xs) - min(xs)
    # |x_i(t)| <= |mean0| + gap0 for the exact flow; 10*dt covers scheme error
    hard_bound = abs(mean0) + gap0 + 10.0 * dt
    gap_tol_decay = 10.0 * gap_decay_tolerance(cfg.integrator, gap0, lam, dt)
    order0 = sorted(range(n), key=xs.__getitem__)
    order_tol = 1e-12 * max(1.0, gap0)

    times: list[float] = []
    states: list[tuple[float, ...]] = []
    consensus: list[float] = []

    def consensus_of(state: list[float]) -> float:
        _, m = _drift(obj, alpha, state, lam)
        return m

    def check_sample(t: float, state: list[float], m: float) -> None:
        for x in state:
            if not (-hard_bound <= x <= hard_bound):  # catches NaN too
                raise IntegrationError(
                    f"uniform bound broken at t={t}: |{x}| > {hard_bound}"
                )
        gap = max(state) - min(state)
        if abs(gap - analytic_gap(gap0, lam, t)) > gap_tol_decay:
            raise IntegrationError(
                f"gap decay broken at t={t}: gap={gap}, "
                f"expected {analytic_gap(gap0, lam, t)}"
            )
        prev = -math.inf
        for i in order0:
            if state[i] < prev - order_tol:
                raise IntegrationError(f"particle order changed at t={t}")
            prev = max(prev, state[i])
        if not min(state) <= m <= max(state):
            raise IntegrationError(f"consensus point left the hull at t={t}")

    def record(t: float, state: list[float], m: float) -> None:
        check_sample(t, state, m)
        if record_trajectory:
            times.append(t)
            states.append(tuple(state))
            consensus.append(m)

    m = consensus_of(xs)
    record(0.0, xs, m)

    k = 0
    gap = gap0
    stop_reason = "t_max_reached"
    if gap < cfg.gap_tol:
        stop_reason = "gap_converged"
    else:
        max_steps = int(math.ceil(t_max / dt))
        while k < max_steps:
            xs, _ = stepper(obj, alpha, lam, xs, dt)
            xs = _police_domain(obj, xs)
            k += 1
            t = k * dt
            sampled = k % cfg.sample_stride == 0
            gap = max(xs) - min(xs)
            if gap < cfg.gap_tol:
                stop_reason = "gap_converged"
                break
            if sampled:
                record(t, xs, consensus_of(xs))
            if t >= t_max:
                break

    t_final = k * dt
    m_final = consensus_of(xs)
    # final state is always recorded (once)
    if not times or times[-1] != t_final:
        record(t_final, xs, m_final)
    else:
        check_sample(t_final, xs, m_final)

    err = None
    if obj.known_minimizer is not None:
        err = abs(m_final - obj.known_minimizer)
    traj = None
    if record_trajectory:
        traj = Trajectory(tuple(times), tuple(states), tuple(consensus))
    return SimOutcome(
        x_inf_estimate=m_final,
        final_gap=max(xs) - min(xs),
        stop_reason=stop_reason,
        error_to_minimizer=err,
        trajectory=traj,
        final_positions=tuple(xs),
        t_final=t_final,
        n_steps=k,
    )


def _upper_weight(obj: Objective, alpha: float, x1: float, tau: float) -> float:
    """Weight of the upper particle of the pair (x1, x1 + tau).

    Algebraically exp(-a f2)/(exp(-a f1)+exp(-a f2)) = 1/(1+exp(a (f2-f1))),
    computed in that one-exponential form so only the sign of f2-f1 matters.
    math.exp overflows just above 709, hence the +-700 cutoff.
    """
    d = alpha * (obj.eval(x1 + tau) - obj.eval(x1))
    if d > 700.0:
        return 0.0
    if d < -700.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(d))


def reduced_two_particle(
    obj: Objective,
    cfg: SimConfig,
    *,
    n_tau_steps: int = 100_000,
    record_trajectory: bool = False,
) -> SimOutcome:
    """Two-particle solver in the gap variable, exact up to quadrature error.

    The pairwise gap obeys gap(t) = gap(0) e^(-lam t) exactly, so the pair is
    fully described by the lower position x1 as a function of the gap tau:

        dx1/dtau = -psi_upper(x1, x1 + tau)

    integrated from tau0 = x2_0 - x1_0 down to gap_tol with fixed-step RK4
    (step tau0/n_tau_steps, signed negative). The rate lam cancels exactly;
    it only enters the reported times through t(tau) = ln(tau0/tau)/lam.
    x_inf_estimate is the consensus point of the final pair, which folds the
    sub-gap_tol remainder back in. The field lies in [-1, 0], so the march is
    not stiff even as tau -> 0.
    """
    if len(cfg.initial_positions) != 2:
        raise ValueError("reduced_two_particle needs exactly two initial positions")
    if n_tau_steps < 1:
        raise ValueError("n_tau_steps must be positive")
    a, b = cfg.initial_positions
    for x in (a, b):
        if not obj.contains(x):
            raise ValueError(
                f"initial position {x} outside domain [{obj.domain_lo}, {obj.domain_hi}]"
            )
    flipped = a > b
    x1, tau0 = (b, a - b) if flipped else (a, b - a)
    alpha = cfg.alpha
    lam = cfg.lam

    times: list[float] = []
    states: list[tuple[float, float]] = []
    consensus: list[float] = []

    def record(tau: float, x: float) -> None:
        psi = _upper_weight(obj, alpha, x, tau)
        m = x + psi * tau
        t = 0.0 if tau >= tau0 else math.log(tau0 / tau) / lam
        times.append(t)
        pair = (x + tau, x) if flipped else (x, x + tau)
        states.append(pair)
        consensus.append(m)

    if tau0 < cfg.gap_tol:
        psi = _upper_weight(obj, alpha, x1, tau0)
        m = x1 + psi * tau0
        err = None
        if obj.known_minimizer is not None:
            err = abs(m - obj.known_minimizer)
        if record_trajectory:
            record(tau0, x1)
        pair = (x1 + tau0, x1) if flipped else (x1, x1 + tau0)
        return SimOutcome(
            x_inf_estimate=m,
            final_gap=tau0,
            stop_reason="gap_converged",
            error_to_minimizer=err,
            trajectory=Trajectory(tuple(times), tuple(states), tuple(consensus))
            if record_trajectory
            else None,
            final_positions=pair,
            t_final=0.0,
            n_steps=0,
        )

    h = tau0 / n_tau_steps
    n_full = int((tau0 - cfg.gap_tol) / h)
    tau = tau0
    f = obj.eval
    exp = math.exp

    if record_trajectory:
        record(tau, x1)
    steps_done = 0
    stride = cfg.sample_stride
    # one signed RK4 step of size s (negative) per iteration; the stage slopes
    # k are the psi_upper weights (in [0, 1]), so x1 moves right by
    # |s| * (weighted k) / 6 while tau shrinks by |s|. The weight evaluations
    # are inlined: this loop is the package's hot spot.
    for i in range(n_full + 1):
        if i < n_full:
            s = -h
        else:
            s = cfg.gap_tol - tau  # final partial step lands exactly on gap_tol
            if s >= 0.0:
                break
        half_s = 0.5 * s
        th = tau + half_s
        d = alpha * (f(x1 + tau) - f(x1))
        k1 = 0.0 if d > 700.0 else 1.0 if d < -700.0 else 1.0 / (1.0 + exp(d))
        y = x1 - half_s * k1
        d = alpha * (f(y + th) - f(y))
        k2 = 0.0 if d > 700.0 else 1.0 if d < -700.0 else 1.0 / (1.0 + exp(d))
        y = x1 - half_s * k2
        d = alpha * (f(y + th) - f(y))
        k3 = 0.0 if d > 700.0 else 1.0 if d < -700.0 else 1.0 / (1.0 + exp(d))
        y = x1 - s * k3
        tg = tau + s
        d = alpha * (f(y + tg) - f(y))
        k4 = 0.0 if d > 700.0 else 1.0 if d < -700.0 else 1.0 / (1.0 + exp(d))
        x1 -= s * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        tau = tg
        steps_done += 1
        if record_trajectory and (steps_done % stride == 0 or i == n_full):
            if not math.isfinite(x1):
                raise IntegrationError(
                    f"reduced solver produced non-finite x1 at tau={tau}"
                )
            record(tau, x1)
    if not math.isfinite(x1):
        raise IntegrationError(f"reduced solver produced non-finite x1 at tau={tau}")

    tau = cfg.gap_tol
    psi = _upper_weight(obj, alpha, x1, tau)
    m = x1 + psi * tau
    err = None
    if obj.known_minimizer is not None:
        err = abs(m - obj.known_minimizer)
    pair = (x1 + tau, x1) if flipped else (x1, x1 + tau)
    traj = None
    if record_trajectory:
        traj = Trajectory(tuple(times), tuple(states), tuple(consensus))
    return SimOutcome(
        x_inf_estimate=m,
        final_gap=tau,
        stop_reason="gap_converged",
        error_to_minimizer=err,
        trajectory=traj,
        final_positions=pair,
        t_final=math.log(tau0 / tau) / lam,
        n_steps=steps_done,
    )


def first_crossing_time(traj: Trajectory, x_star: float, tol: float = 1e-12) -> float | None:
    """First sampled time at which any particle sits strictly past x_star.

    A particle crosses when it started on one side of x_star and a sample puts
    it on the other side by more than tol. Returns None if no sample crosses.
    """
    if not traj.states:
        return None
    start = traj.states[0]
    for t, state in zip(traj.times, traj.states):
        for x0, x in zip(start, state):
            if x0 < x_star and x > x_star + tol:
                return t
            if x0 > x_star and x < x_star - tol:
                return t
    return None


def trajectory_csv(traj: Trajectory) -> str:
    """CSV text with columns t, x_1..x_N, m, gap_max at 17 significant digits."""
    n = len(traj.states[0]) if traj.states else 0
    header = "t," + ",".join(f"x_{i + 1}" for i in range(n)) + ",m,gap_max"
    lines = [header]
    for t, state, m in zip(traj.times, traj.states, traj.consensus_values):
        gap = max(state) - min(state)
        cells = [f"{t:.17g}"] + [f"{x:.17g}" for x in state] + [f"{m:.17g}", f"{gap:.17g}"]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
