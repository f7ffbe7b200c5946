"""Planar two-disk testbed: Hamiltonian, slow drift, level-set quadrature.

The Hamiltonian is H = f1*f2 with f_i = 1 - |x -+ (a, 0)|^2, the product of
two unit disks offset by +-a.  Its zero level is the two circles; the sign
pattern (positive in the lens and the exterior, negative in the crescents)
gives three stable equilibria O1, O2, O3 and two saddles where the circles
cross.  The slow drift is beta = c_beta * H * m * grad H with
m = f1 + f2 + sqrt(f1^2 + f2^2), which vanishes exactly on the outer arcs
and satisfies the required sign conditions in all four lobes.  The noise
coefficient is sqrt(s(x)) with s = 1 + c_a * tanh(x); c_a != 0 breaks the
left/right symmetry of the diffusion transport.

Level-set functionals (periods, diffusion transport, drift mass) are
computed by tracing contours with a stabilised tangent ODE and integrating
along them; plane-region integrals are recovered from the level structure
and used as the independent divergence-theorem cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

TWO_PI = 2.0 * math.pi


class OnSeparatrix(ValueError):
    """Point lies on a zero circle within tolerance; no lobe assigned."""


class EmptyLevel(ValueError):
    """The requested level does not intersect the lobe."""


class OffLevel(ValueError):
    """Point is not on the requested level curve."""


class QuadratureFail(ArithmeticError):
    """Contour tracing or quadrature did not meet its tolerance."""


class DegenerateWeight(ValueError):
    """A branching weight product came out non-positive."""


@dataclass(frozen=True)
class TwoDiskSystem:
    """Two overlapping unit disks offset by +-a on the x axis.

    beta_amp scales the slow drift, diff_asym the tanh asymmetry of the
    scalar diffusion, r_max the radius beyond which the drift is tamed.
    """

    offset: float = 0.6
    beta_amp: float = 0.5
    diff_asym: float = 0.4
    r_max: float = 3.0

    def __post_init__(self):
        if not 0.0 < self.offset < 1.0:
            raise ValueError("offset must lie in (0, 1)")
        if self.beta_amp <= 0.0:
            raise ValueError("beta_amp must be positive")
        if not -1.0 < self.diff_asym < 1.0:
            raise ValueError("|diff_asym| must be below 1 for ellipticity")

    # -- scalar building blocks ------------------------------------------

    def f1(self, x, y):
        return 1.0 - ((x + self.offset) ** 2 + y**2)

    def f2(self, x, y):
        return 1.0 - ((x - self.offset) ** 2 + y**2)

    def hamiltonian(self, x, y):
        return self.f1(x, y) * self.f2(x, y)

    def grad_h(self, x, y):
        a = self.offset
        f1 = self.f1(x, y)
        f2 = self.f2(x, y)
        hx = -2.0 * (f2 * (x + a) + f1 * (x - a))
        hy = -2.0 * y * (f1 + f2)
        return hx, hy

    def skew_grad_h(self, x, y):
        hx, hy = self.grad_h(x, y)
        return -hy, hx

    def laplacian_h(self, x, y):
        return 16.0 * (np.asarray(x) ** 2 + np.asarray(y) ** 2) - 8.0

    def hessian_h(self, x, y):
        a = self.offset
        f12 = self.f1(x, y) + self.f2(x, y)
        hxx = -2.0 * f12 + 8.0 * (x**2 - a**2)
        hyy = -2.0 * f12 + 8.0 * y**2
        hxy = 8.0 * x * y
        return hxx, hxy, hyy

    def m_factor(self, x, y):
        f1 = self.f1(x, y)
        f2 = self.f2(x, y)
        return f1 + f2 + np.sqrt(f1**2 + f2**2)

    def grad_m(self, x, y):
        a = self.offset
        f1 = self.f1(x, y)
        f2 = self.f2(x, y)
        g1 = (-2.0 * (x + a), -2.0 * np.asarray(y, dtype=float))
        g2 = (-2.0 * (x - a), -2.0 * np.asarray(y, dtype=float))
        norm = np.sqrt(f1**2 + f2**2)
        # the radical is not differentiable exactly at the saddles, where
        # f1 = f2 = 0; the guarded ratio only ever multiplies terms that
        # vanish there
        safe = np.where(norm > 1e-14, norm, 1.0)
        wx = (f1 * g1[0] + f2 * g2[0]) / safe
        wy = (f1 * g1[1] + f2 * g2[1]) / safe
        wx = np.where(norm > 1e-14, wx, 0.0)
        wy = np.where(norm > 1e-14, wy, 0.0)
        return g1[0] + g2[0] + wx, g1[1] + g2[1] + wy

    def beta(self, x, y):
        h = self.hamiltonian(x, y)
        m = self.m_factor(x, y)
        hx, hy = self.grad_h(x, y)
        c = self.beta_amp * h * m
        return c * hx, c * hy

    def div_beta(self, x, y):
        h = self.hamiltonian(x, y)
        m = self.m_factor(x, y)
        hx, hy = self.grad_h(x, y)
        mx, my = self.grad_m(x, y)
        gn2 = hx**2 + hy**2
        return self.beta_amp * (
            m * gn2 + h * (mx * hx + my * hy) + h * m * self.laplacian_h(x, y)
        )

    def diffusion_scalar(self, x, y=None):
        return 1.0 + self.diff_asym * np.tanh(np.asarray(x, dtype=float))

    def grad_diffusion_scalar(self, x, y=None):
        t = np.tanh(np.asarray(x, dtype=float))
        return self.diff_asym * (1.0 - t**2), np.zeros_like(t)

    def div_a_grad_h(self, x, y):
        hx, hy = self.grad_h(x, y)
        sx, _ = self.grad_diffusion_scalar(x)
        return sx * hx + self.diffusion_scalar(x) * self.laplacian_h(x, y)

    # -- geometry ---------------------------------------------------------

    @property
    def critical_points(self) -> dict:
        a = self.offset
        r = math.sqrt(1.0 + a * a)
        s = math.sqrt(1.0 - a * a)
        return {
            1: (-r, 0.0),
            2: (0.0, 0.0),
            3: (r, 0.0),
            4: (0.0, s),
            5: (0.0, -s),
        }

    def level_range(self, lobe: int):
        """Open interval of levels whose curves lie in the lobe."""
        a = self.offset
        if lobe in (1, 3):
            return (-4.0 * a * a, 0.0)
        if lobe == 2:
            return (0.0, (1.0 - a * a) ** 2)
        if lobe == 4:
            return (0.0, math.inf)
        raise ValueError(f"unknown lobe {lobe}")

    def lobe_extremum(self, lobe: int) -> float:
        a = self.offset
        if lobe in (1, 3):
            return -4.0 * a * a
        if lobe == 2:
            return (1.0 - a * a) ** 2
        raise ValueError("lobe 4 has no extremum")

    def project_to_graph(self, x, y, tol: float = 1e-12):
        """(lobe, level) of a point off the separatrix."""
        f1 = float(self.f1(x, y))
        f2 = float(self.f2(x, y))
        if abs(f1) <= tol or abs(f2) <= tol:
            raise OnSeparatrix(f"point ({x}, {y}) lies on a zero circle")
        if f1 > 0 and f2 > 0:
            lobe = 2
        elif f1 > 0:
            lobe = 1
        elif f2 > 0:
            lobe = 3
        else:
            lobe = 4
        return lobe, float(self.hamiltonian(x, y))

    def eval_field(self, x, y, delta: float, kappa: float):
        """Drift of the rescaled dynamics and the noise coefficient.

        Drift = (1/delta) * skew grad H + beta, norm-tamed beyond r_max so
        that far-field trajectories cannot blow up in one step.  Noise
        coefficient multiplies an isotropic Wiener increment.
        """
        bx, by = self.skew_grad_h(x, y)
        px, py = self.beta(x, y)
        dx = bx / delta + px
        dy = by / delta + py
        r = np.sqrt(np.asarray(x, dtype=float) ** 2 + np.asarray(y) ** 2)
        over = np.maximum(r - self.r_max, 0.0)
        norm = np.sqrt(dx**2 + dy**2)
        scale = 1.0 / (1.0 + over * norm)
        sig = np.sqrt(kappa * self.diffusion_scalar(x))
        return dx * scale, dy * scale, sig

    def seed_point(self, lobe: int, z: float):
        """A point on the level curve {H = z} inside the lobe."""
        a = self.offset
        lo, hi = self.level_range(lobe)
        if not lo < z < hi:
            raise EmptyLevel(f"level {z} outside lobe-{lobe} range ({lo}, {hi})")
        if lobe == 4:
            return 0.0, math.sqrt(1.0 - a * a + math.sqrt(z))
        if lobe == 2:
            x = brentq(
                lambda t: self.hamiltonian(t, 0.0) - z,
                0.0,
                (1.0 - a) * (1.0 - 1e-13),
                xtol=1e-15,
            )
            return x, 0.0
        sign = -1.0 if lobe == 1 else 1.0
        inner = math.sqrt(1.0 + a * a)
        outer = 1.0 + a
        x = brentq(
            lambda t: self.hamiltonian(sign * t, 0.0) - z,
            inner,
            outer * (1.0 - 1e-13),
            xtol=1e-15,
        )
        return sign * x, 0.0

    def lobe_anchor(self, lobe: int):
        if lobe in (1, 2, 3):
            return self.critical_points[lobe]
        return (0.0, 0.0)


# -- contour tracing -------------------------------------------------------

_FEEDBACK = 25.0


def trace_contour(system: TwoDiskSystem, lobe: int, z: float, integrands,
                  rtol: float = 1e-10):
    """Closed-loop line integrals along {H = z} within one lobe.

    integrands: callables g(x, y); returns the array of loop integrals
    of g dl.  The tangent field is the normalised skew gradient with a
    feedback term restoring H = z; closure is detected by the winding
    angle around the lobe anchor reaching +-2*pi.
    """
    x0, y0 = system.seed_point(lobe, z)
    ax, ay = system.lobe_anchor(lobe)
    k = len(integrands)

    def rhs(_, state):
        x, yy = state[0], state[1]
        hx, hy = system.grad_h(x, yy)
        gn2 = hx * hx + hy * hy
        gn = math.sqrt(gn2)
        tx, ty = -hy / gn, hx / gn
        corr = _FEEDBACK * (z - system.hamiltonian(x, yy)) / gn2
        vx = tx + corr * hx
        vy = ty + corr * hy
        speed = math.hypot(vx, vy)
        rx, ry = x - ax, yy - ay
        dwind = (rx * vy - ry * vx) / (rx * rx + ry * ry)
        out = [vx, vy, dwind]
        for g in integrands:
            out.append(g(x, yy) * speed)
        return out

    def closed_pos(_, state):
        return state[2] - TWO_PI

    def closed_neg(_, state):
        return state[2] + TWO_PI

    closed_pos.terminal = True
    closed_neg.terminal = True
    sol = solve_ivp(
        rhs,
        (0.0, 1e4),
        [x0, y0, 0.0] + [0.0] * k,
        method="DOP853",
        rtol=rtol,
        atol=rtol * 1e-3,
        events=(closed_pos, closed_neg),
        max_step=0.25,
    )
    if sol.status != 1:
        raise QuadratureFail(f"contour at lobe {lobe}, z={z} did not close")
    end = sol.y[:, -1]
    if abs(abs(end[2]) - TWO_PI) > 1e-7:
        raise QuadratureFail("winding did not terminate at a full loop")
    return np.array(end[3:])


@dataclass(frozen=True)
class LevelQuantities:
    """Period, diffusion transport and drift mass of one level curve.

    a_hat is the positive transport magnitude |integral of div(a grad H)|
    over the enclosed lobe region; beta_hat is signed positive when the
    drift pushes mass deeper into the lobe (away from the separatrix).
    """

    lobe: int
    level: float
    period: float
    a_hat: float
    beta_hat: float

    @property
    def a_avg(self) -> float:
        return self.a_hat / self.period

    @property
    def beta_avg(self) -> float:
        return self.beta_hat / self.period


def level_quantities(system: TwoDiskSystem, lobe: int, z: float,
                     rtol: float = 1e-10) -> LevelQuantities:
    """Flux-form evaluation of the level functionals from one trace.

    T = loop dl/|grad H|; a_hat = loop s|grad H| dl; beta_hat =
    c_beta*|z| * loop m|grad H| dl (sign: toward the lobe extremum for
    lobes 1-3, toward the separatrix for lobe 4).  The plane-region
    definitions agree by the divergence theorem; see region_integral for
    the independently computed version.
    """
    lo, hi = system.level_range(lobe)
    if not lo < z < hi:
        raise EmptyLevel(f"level {z} outside lobe-{lobe} range")

    def inv_gn(x, y):
        hx, hy = system.grad_h(x, y)
        return 1.0 / math.hypot(hx, hy)

    def s_gn(x, y):
        hx, hy = system.grad_h(x, y)
        return system.diffusion_scalar(x) * math.hypot(hx, hy)

    def m_gn(x, y):
        hx, hy = system.grad_h(x, y)
        return system.m_factor(x, y) * math.hypot(hx, hy)

    period, a_hat, m_int = trace_contour(
        system, lobe, z, (inv_gn, s_gn, m_gn), rtol=rtol
    )
    # m < 0 in the exterior lobe, so the lobe-4 drift mass is negative
    # (toward the separatrix) without any explicit sign flip
    beta_hat = system.beta_amp * abs(z) * m_int
    return LevelQuantities(
        lobe=lobe, level=z, period=period, a_hat=a_hat, beta_hat=beta_hat
    )


def invariant_density(system: TwoDiskSystem, lobe: int, z: float, x, y,
                      tol: float = 1e-9) -> float:
    """Density of the normalised invariant measure on the level curve."""
    if abs(system.hamiltonian(x, y) - z) > tol * max(1.0, abs(z)):
        raise OffLevel(f"H({x}, {y}) != {z}")
    period = level_quantities(system, lobe, z).period
    hx, hy = system.grad_h(x, y)
    return 1.0 / (period * math.hypot(hx, hy))


def region_integral(system: TwoDiskSystem, lobe: int, g, z: float = 0.0,
                    epsabs: float = 2e-9, epsrel: float = 1e-9,
                    trace_rtol: float = 1e-9) -> float:
    """Integral of g over the lobe region enclosed by {H = z}.

    Computed from the level structure: the region integral is the level
    integral of the loop integrals of g/|grad H| (adaptive, with endpoint
    extrapolation for the logarithmic blow-up at the separatrix).  Only
    lobes 1-3 bound a plain region; z = 0 integrates the whole lobe.
    """
    import warnings

    if lobe not in (1, 2, 3):
        raise ValueError("region integrals defined for lobes 1-3")
    z_star = system.lobe_extremum(lobe)
    lo, hi = (z_star, z) if lobe in (1, 3) else (z, z_star)
    if not lo < hi:
        raise EmptyLevel(f"level {z} outside lobe-{lobe} range")

    def slice_integral(u):
        def g_over_gn(x, y):
            hx, hy = system.grad_h(x, y)
            return g(x, y) / math.hypot(hx, hy)

        return trace_contour(system, lobe, u, (g_over_gn,), rtol=trace_rtol)[0]

    from scipy.integrate import quad

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val, _ = quad(
            slice_integral, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=200
        )
    return val


# -- zero-level arc quadrature ---------------------------------------------

def _arc_gauss(f, theta_lo, theta_hi, n_panels, gauss=10):
    nodes, wts = leggauss(gauss)
    edges = np.linspace(theta_lo, theta_hi, n_panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        t = mid + half * nodes
        total += half * float(np.sum(wts * f(t)))
    return total


def _boundary_arcs(system: TwoDiskSystem, lobe: int):
    """Arc parametrisations of the zero-level boundary of one lobe.

    Each arc is (point(theta), |grad H|(theta), m(theta), (lo, hi)); the
    circles have unit radius so dl = dtheta.
    """
    a = system.offset
    th_a = math.acos(a)       # circle-1 arc inside circle 2: |theta| < th_a
    th_b = math.acos(-a)      # circle-2 arc inside circle 1: theta in (th_b, 2pi-th_b)

    def on_c1(theta):
        x = -a + np.cos(theta)
        y = np.sin(theta)
        f2 = 4.0 * a * (np.cos(theta) - a)
        return x, y, 2.0 * np.abs(f2), np.where(f2 > 0, 2.0 * f2, 0.0)

    def on_c2(theta):
        x = a + np.cos(theta)
        y = np.sin(theta)
        f1 = -4.0 * a * (a + np.cos(theta))
        return x, y, 2.0 * np.abs(f1), np.where(f1 > 0, 2.0 * f1, 0.0)

    inner_c1 = (on_c1, (-th_a, th_a))
    outer_c1 = (on_c1, (th_a, TWO_PI - th_a))
    inner_c2 = (on_c2, (th_b, TWO_PI - th_b))
    outer_c2 = (on_c2, (-th_b, th_b))
    if lobe == 1:
        return [outer_c1, inner_c2]
    if lobe == 2:
        return [inner_c1, inner_c2]
    if lobe == 3:
        return [outer_c2, inner_c1]
    if lobe == 4:
        return [outer_c1, outer_c2]
    raise ValueError(f"unknown lobe {lobe}")


def gamma(system: TwoDiskSystem, lobe: int, n_panels: int = 24) -> float:
    """Vertex slope of the drift mass: loop of div(beta)/|grad H| dl at 0.

    On the zero circles div(beta) = c_beta * m * |grad H|^2, so only the
    inner arcs (where m > 0) contribute and the saddle endpoints vanish.
    """
    if lobe not in (1, 2, 3):
        raise ValueError("gamma defined for lobes 1-3")
    total = 0.0
    for param, (lo, hi) in _boundary_arcs(system, lobe):
        def f(theta, _param=param):
            _, _, gn, m = _param(theta)
            return system.beta_amp * m * gn

        total += _arc_gauss(f, lo, hi, n_panels)
    return total


def gamma_closed_form(system: TwoDiskSystem, lobe: int) -> float:
    """Analytic value of gamma for lobes 1 and 3 (and their sum for 2)."""
    a = system.offset
    th_b = math.acos(-a)
    one_side = (
        64.0
        * system.beta_amp
        * a
        * a
        * ((2.0 * a * a + 1.0) * (math.pi - th_b) - 3.0 * a * math.sqrt(1.0 - a * a))
    )
    if lobe in (1, 3):
        return one_side
    if lobe == 2:
        return 2.0 * one_side
    raise ValueError("closed form for lobes 1-3 only")


def a_hat_zero(system: TwoDiskSystem, lobe: int, n_panels: int = 24) -> float:
    """Diffusion transport at the vertex: loop of s|grad H| dl over the
    zero-level boundary of the lobe."""
    total = 0.0
    for param, (lo, hi) in _boundary_arcs(system, lobe):
        def f(theta, _param=param):
            x, _, gn, _ = _param(theta)
            return system.diffusion_scalar(x) * gn

        total += _arc_gauss(f, lo, hi, n_panels)
    return total


def gamma_from_slope(system: TwoDiskSystem, lobe: int, h: float = 1e-4) -> float:
    """gamma as the level derivative of the drift mass, for cross-checks."""
    lq = level_quantities(system, lobe, -h if lobe in (1, 3) else h)
    return abs(lq.beta_hat) / h


@dataclass(frozen=True)
class AlphaEstimate:
    """Escape-cost integral of one lobe, in both normalisations.

    `plain` is the bare level integral of beta_hat/a_hat; `doubled`
    carries the factor 2 of the stationary escape rate for generator
    (kappa/2) a u'' + beta u'.  Which one matches exit-time Monte Carlo is
    probed by tests; both are reported.
    """

    lobe: int
    plain: float
    doubled: float


def alpha_limit(system: TwoDiskSystem, lobe: int, n_panels: int = 24,
                gauss: int = 8, trace_rtol: float = 1e-10) -> AlphaEstimate:
    """Level integral of the drift-to-transport ratio over one lobe edge.

    The ratio beta_hat/a_hat has finite limits at both ends (periods
    cancel), so plain composite Gauss panels in z converge fast.
    """
    if lobe not in (1, 2, 3):
        raise ValueError("alpha defined for lobes 1-3")
    z_star = system.lobe_extremum(lobe)
    lo, hi = (z_star, 0.0) if lobe in (1, 3) else (0.0, z_star)
    nodes, wts = leggauss(gauss)
    edges = np.linspace(lo, hi, n_panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        for t, w in zip(nodes, wts):
            lq = level_quantities(system, lobe, mid + half * t, rtol=trace_rtol)
            total += w * half * (lq.beta_hat / lq.a_hat)
    val = abs(total)
    return AlphaEstimate(lobe=lobe, plain=val, doubled=2.0 * val)


def metastable_weights(system: TwoDiskSystem, targets=(1, 2, 3),
                       n_panels: int = 24) -> dict:
    """Branching weights sqrt(a_hat_i * gamma_i), normalised over targets."""
    targets = tuple(sorted(set(targets)))
    if len(targets) not in (2, 3) or not set(targets) <= {1, 2, 3}:
        raise ValueError("targets must be two or three of lobes 1-3")
    prods = {}
    for i in targets:
        p = a_hat_zero(system, i, n_panels) * gamma(system, i, n_panels)
        if p <= 0.0:
            raise DegenerateWeight(f"a_hat*gamma <= 0 for lobe {i}")
        prods[i] = math.sqrt(p)
    norm = sum(prods.values())
    return {i: v / norm for i, v in prods.items()}


def symmetric_offset(beta_amp: float = 0.5, bracket=(0.2, 0.9)) -> float:
    """Disk offset at which all three branching weights are equal.

    gamma_2 = 2*gamma_1 always, so equal weights need a_hat_2 = a_hat_1/2;
    the lens shrinks relative to the crescents as the offset grows, and the
    balance point is the root found here.
    """

    def imbalance(a):
        sys_a = TwoDiskSystem(offset=a, beta_amp=beta_amp, diff_asym=0.0)
        return 2.0 * a_hat_zero(sys_a, 2) - a_hat_zero(sys_a, 1)

    return brentq(imbalance, *bracket, xtol=1e-12)


def default_system() -> TwoDiskSystem:
    return TwoDiskSystem()


_SYMMETRIC_OFFSET_CACHE: dict = {}


def symmetric_system(beta_amp: float = 0.5) -> TwoDiskSystem:
    """Preset with c_a = 0 and the offset tuned for equal branching."""
    a = _SYMMETRIC_OFFSET_CACHE.get(beta_amp)
    if a is None:
        a = symmetric_offset(beta_amp)
        _SYMMETRIC_OFFSET_CACHE[beta_amp] = a
    return TwoDiskSystem(offset=a, beta_amp=beta_amp, diff_asym=0.0)
