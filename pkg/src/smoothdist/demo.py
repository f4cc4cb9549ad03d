"""Point mass dropped into a V-shaped bowl, constrained by exact or smooth distance.

Each step solves the implicit Euler problem

    min_p  1/2 |p - (p0 + h v0 + h^2 g)|^2   s.t.  c(p) >= 0

with a primal-dual interior point method whose primal Hessian is the
identity.  The bowl is a polyline in the z = 0 plane; z stays pinned.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .exact_dist import exact_min_distance, simplex_distance
from .mesh import SimplexMesh
from .shapes import v_bowl
from .smooth import DistanceField, SmoothParams

log = logging.getLogger(__name__)

GRAVITY = (0.0, -9.81, 0.0)
DEFAULT_ALPHA = 10.0  # rounds the apex on the scale of about 0.1 bowl widths

# bowl geometry per scenario: depth of the apex below the rim, half width
SCENARIOS = {
    "shallow": dict(depth=0.4, half_width=1.0),
    "deep": dict(depth=2.0, half_width=1.0),
}


@dataclass(frozen=True)
class DemoState:
    position: np.ndarray
    velocity: np.ndarray
    h: float = 1.0 / 200.0
    gravity: np.ndarray = field(default_factory=lambda: np.array(GRAVITY))
    t: float = 0.0

    def energy(self) -> float:
        return 0.5 * float(self.velocity @ self.velocity) - float(self.gravity @ self.position)


@dataclass(frozen=True)
class IpmSettings:
    mu0: float = 1e-3
    mu_factor: float = 0.2
    tol: float = 1e-8
    max_iter: int = 100
    max_backtracks: int = 30
    boundary_fraction: float = 0.99
    armijo: float = 1e-4
    kappa: float = 10.0


class ExactConstraint:
    """c(p) = exact distance from p to the bowl."""

    def __init__(self, mesh: SimplexMesh):
        self.mesh = mesh

    def __call__(self, p):
        d, i = exact_min_distance(self.mesh, p[None, :])
        k = self.mesh.kinds[i]
        cp = simplex_distance(self.mesh.vertices[self.mesh.simplices[i, : k + 1]], p[None, :])
        return d, cp.grad


class SmoothConstraint:
    """c(p) = smooth distance from p to the bowl."""

    def __init__(self, mesh: SimplexMesh, params: SmoothParams):
        self.mesh = mesh
        self.field = DistanceField.build(mesh)
        self.params = params

    def __call__(self, p):
        r = self.field.query(p[None, :], self.params)
        return r.d_hat, r.grad


SWEEP_TOL = 1e-10


class LineSearchError(RuntimeError):
    pass


def swept_clear(mesh, p, q) -> bool:
    """The segment p -> q does not touch the bowl.

    Endpoint feasibility alone lets a step jump across a zero-thickness
    edge, since unsigned distance is positive on both sides.
    """
    if np.linalg.norm(q - p) <= 1e-12 * (1.0 + np.linalg.norm(p)):
        return True
    d, _ = exact_min_distance(mesh, np.stack([p, q]))
    # crossing coplanar segments come back as ~1e-13 rather than 0
    return d > SWEEP_TOL


def ipm_solve(target, p0, constraint, settings: IpmSettings = IpmSettings()):
    """Minimize 1/2 |p - target|^2 subject to constraint(p) >= 0 from a strictly feasible p0.

    Returns (p, iterations, c(p)).
    """
    p = np.array(p0, dtype=float)
    c, gc = constraint(p)
    if not c > 0:
        raise ValueError(f"starting point is not strictly feasible (c={c})")
    # warm start: least-squares multiplier of  p - target = lam grad c.  Starting from mu/c
    # instead blows lam up when p0 sits in contact and c is tiny.
    lam = max(float(gc @ (p - target)) / max(float(gc @ gc), 1e-300), 1e-12)
    mu = min(settings.mu0, max(lam * c, 0.1 * settings.tol))

    def merit(p, c):
        r = p - target
        return 0.5 * float(r @ r) - mu * np.log(c)

    for it in range(1, settings.max_iter + 1):
        # Newton step on  p - target - lam grad c = 0,  lam c = mu  with the Hessian block set to I.
        # The right-hand side equals -grad of the barrier merit, and K is SPD, so dp is a descent direction.
        b = -(p - target) + (mu / c) * gc
        k = lam / c
        # K = I + (lam/c) gc gc^T, inverted with Sherman-Morrison
        dp = b - gc * (k * (gc @ b) / (1.0 + k * (gc @ gc)))
        dlam = (mu - lam * c - lam * (gc @ dp)) / c
        s = 1.0
        if dlam < 0:
            s = min(1.0, -settings.boundary_fraction * lam / dlam)
        m0, slope = merit(p, c), -float(b @ dp)
        for _ in range(settings.max_backtracks):
            pn = p + s * dp
            cn, gn = constraint(pn)
            if cn > 0 and merit(pn, cn) <= m0 + settings.armijo * s * slope and swept_clear(constraint.mesh, p, pn):
                break
            s *= 0.5
        else:
            raise LineSearchError("no feasible step found")
        p, c, gc = pn, cn, gn
        lam = lam + s * dlam
        stat = np.linalg.norm(p - target - lam * gc)
        if max(stat, abs(lam * c)) < settings.tol:
            return p, it, c
        # shrink mu once the current barrier problem is roughly solved; the floor keeps
        # lam c inside the tolerance without driving c towards underflow
        if max(stat, abs(lam * c - mu)) <= settings.kappa * mu:
            mu = max(mu * settings.mu_factor, 0.1 * settings.tol)
    return p, settings.max_iter, c


def step(state: DemoState, constraint, settings: IpmSettings = IpmSettings(), max_halvings=4):
    """One implicit Euler step.

    On line-search failure the step is retried with h halved; the nominal
    ``state.h`` is kept for the next step.  Returns (state, iterations, c, h_used).
    """
    h = state.h
    for _ in range(max_halvings + 1):
        target = state.position + h * state.velocity + h * h * state.gravity
        target[2] = state.position[2]
        try:
            p, iters, c = ipm_solve(target, state.position, constraint, settings)
        except LineSearchError:
            log.info("line search failed at t=%g, retrying with h=%g", state.t, h / 2)
            h /= 2
            continue
        p[2] = state.position[2]
        v = (p - state.position) / h
        return replace(state, position=p, velocity=v, t=state.t + h), iters, c, h
    raise LineSearchError("step rejected after repeated halving")


def make_constraint(mesh, mode, alpha):
    if mode == "exact":
        return ExactConstraint(mesh)
    if mode == "smooth":
        # exact derivatives keep the Newton iteration consistent with the function it steps on
        return SmoothConstraint(mesh, SmoothParams(alpha=alpha, beta=0.0, metric_scaling=False, exact_jacobian=True))
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class Trajectory:
    rows: list  # (t, x, y, z, vx, vy, vz, constraint, iterations)

    @property
    def array(self):
        return np.array(self.rows, dtype=float)


def initial_state(scenario, h):
    geo = SCENARIOS[scenario]
    x0 = -0.5 * geo["half_width"]
    y0 = geo["depth"] * 0.5 + 0.3  # above the left slope
    return DemoState(np.array([x0, y0, 0.0]), np.zeros(3), h)


def run_demo(scenario="deep", mode="smooth", steps=1000, h=1.0 / 200.0, alpha=DEFAULT_ALPHA, out=None) -> Trajectory:
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    mesh = v_bowl(**SCENARIOS[scenario])
    con = make_constraint(mesh, mode, alpha)
    state = initial_state(scenario, h)
    c0, _ = con(state.position)
    rows = [(state.t, *state.position, *state.velocity, c0, 0)]
    for _ in range(steps):
        try:
            state, iters, c, _ = step(state, con)
        except LineSearchError:
            # jammed: no feasible descent even for tiny h, so the mass stays put
            log.warning("step rejected at t=%g; holding position", state.t)
            state = replace(state, velocity=np.zeros(3), t=state.t + state.h)
            iters, c = -1, con(state.position)[0]
        rows.append((state.t, *state.position, *state.velocity, c, iters))
    traj = Trajectory(rows)
    if out is not None:
        write_trajectory(out, traj)
    return traj


def write_trajectory(path, traj: Trajectory):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "z", "vx", "vy", "vz", "constraint", "iterations"])
        for r in traj.rows:
            w.writerow([repr(float(x)) for x in r[:8]] + [int(r[8])])


def climbing_rows(traj: Trajectory, margin=0.01, vtol=1e-2):
    """Rows after the first contact where the mass is past the apex (x > margin) and moving up."""
    a = traj.array
    contact = np.flatnonzero(a[:, 7] < 0.05)
    if len(contact) == 0:
        return np.zeros(0, dtype=int)
    tail = a[contact[0]:]
    return contact[0] + np.flatnonzero((tail[:, 1] > margin) & (tail[:, 5] > vtol))


def passes_base(traj: Trajectory, margin=0.01, vtol=1e-2) -> bool:
    """The mass crosses the medial axis and climbs the far slope."""
    return len(climbing_rows(traj, margin, vtol)) > 0


def stalled(traj: Trajectory, margin=0.01, vtol=1e-2) -> bool:
    """After first contact the vertical velocity never recovers past the apex."""
    a = traj.array
    return bool(np.any(a[:, 7] < 0.05)) and not passes_base(traj, margin, vtol)


def free_fall_target(state: DemoState):
    return state.position + state.h * state.velocity + state.h**2 * state.gravity


def energy_drift_free_fall(h, g=GRAVITY):
    """Energy change per unconstrained implicit Euler step: -h^2 |g|^2 / 2."""
    return -0.5 * h * h * float(np.dot(g, g))

