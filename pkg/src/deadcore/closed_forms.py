"""Closed-form solutions and analytic comparison functions.

Everything here is exact calculus on top of the absorption equation
A u'' - B u' = Lambda u^p:

* the explicit compactly supported solution for constant coefficients
  and no drift, together with its free-boundary radius;
* the polynomial-tail comparison families (c - r)^l f(r) used to bracket
  the free boundary for outward drifts;
* the exponential comparison families for inward power-law drifts;
* an existence certificate built from iterated exponentials that
  dominates any admissible drift;
* the auxiliary linear problem (the function g_c) and the companion
  integral v_c that control the critical inward drift -B0/r.

The prefactor of the explicit profile is derived by substituting
gamma (c - r)^(2/(1-p)) into the equation, which forces
gamma* = (Lambda (1-p)^2 / (2 A (1+p)))^(1/(1-p)); the free-boundary
radii below are consistent with that constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import roots_jacobi

from .errors import CertificateOverflowError, NumericalFailure


# ---------------------------------------------------------------------------
# explicit constant-coefficient solution


@dataclass(frozen=True)
class ExplicitProfile:
    """Compactly supported solution for constant A, Lambda and B = 0.

    value(r) = gamma (r_star - r)^(2/(1-p)) for r < r_star, 0 beyond.
    """

    bc_kind: str
    A: float
    Lambda: float
    p: float
    R: float
    h: float
    gamma: float
    r_star: float

    @property
    def tail_exponent(self) -> float:
        return 2.0 / (1.0 - self.p)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        gap = np.maximum(self.r_star - r, 0.0)
        out = self.gamma * gap ** self.tail_exponent
        return out if out.ndim else float(out)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        l = self.tail_exponent
        gap = np.maximum(self.r_star - r, 0.0)
        out = -self.gamma * l * gap ** (l - 1.0)
        return out if out.ndim else float(out)


def _require_constant(value, name):
    # accepts plain numbers or a constant CoefficientSpec
    if hasattr(value, "kind"):
        if value.kind != "constant":
            raise ValueError(f"explicit solution requires constant {name}")
        return float(value(1.0))
    return float(value)


def explicit_profile(bc_kind: str, A, Lambda, p: float, R: float, h: float) -> ExplicitProfile:
    """Exact solution and free-boundary radius for constant coefficients.

    Flux condition (u'(R) = -h):
        r* = R + (1/(1-p)) (2^p (1+p) A / Lambda)^(1/(1+p)) h^((1-p)/(1+p))
    Value condition (u(R) = h):
        r* = R + (1/(1-p)) (2 (1+p) A / Lambda)^(1/2) h^((1-p)/2)
    """
    A = _require_constant(A, "A")
    lam = _require_constant(Lambda, "Lambda")
    if not (A > 0 and lam > 0 and h > 0 and R > 0):
        raise ValueError("A, Lambda, R and h must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    gamma = (lam * (1.0 - p) ** 2 / (2.0 * A * (1.0 + p))) ** (1.0 / (1.0 - p))
    l = 2.0 / (1.0 - p)
    if bc_kind == "neumann":
        # gamma * l * (r* - R)^(l-1) = h
        r_star = R + (h / (gamma * l)) ** ((1.0 - p) / (1.0 + p))
    elif bc_kind == "dirichlet":
        # gamma * (r* - R)^l = h
        r_star = R + (h / gamma) ** ((1.0 - p) / 2.0)
    else:
        raise ValueError("bc_kind must be 'neumann' or 'dirichlet'")
    return ExplicitProfile(bc_kind=bc_kind, A=A, Lambda=lam, p=p, R=R, h=h,
                           gamma=gamma, r_star=r_star)


# ---------------------------------------------------------------------------
# comparison-function profiles (c - r)^l f(r)


@dataclass(frozen=True)
class TestFunctionProfile:
    """Comparison function V(r) = (c - r)^l f(r) on [R, c], 0 beyond.

    l > 1 makes V continuously differentiable across r = c.  f and its
    first two derivatives are supplied in closed form so the operator
    A V'' - B V' can be evaluated without finite differencing.
    """

    role: str
    c: float
    l: float
    f: Callable
    f_prime: Callable
    f_double_prime: Callable
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ("upper", "lower"):
            raise ValueError("role must be 'upper' or 'lower'")
        if not self.l > 1.0:
            raise ValueError("outer exponent l must exceed 1")

    def value(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r < self.c
        gap = self.c - r[inside]
        out[inside] = gap ** self.l * self.f(r[inside])
        return out if out.ndim else float(out)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r < self.c
        ri = r[inside]
        gap = self.c - ri
        out[inside] = (gap ** self.l * self.f_prime(ri)
                       - self.l * gap ** (self.l - 1.0) * self.f(ri))
        return out if out.ndim else float(out)

    def second_derivative(self, r):
        # valid for r < c only; the profile need not be C^2 at r = c
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r < self.c
        ri = r[inside]
        gap = self.c - ri
        out[inside] = (gap ** self.l * self.f_double_prime(ri)
                       - 2.0 * self.l * gap ** (self.l - 1.0) * self.f_prime(ri)
                       + self.l * (self.l - 1.0) * gap ** (self.l - 2.0) * self.f(ri))
        return out if out.ndim else float(out)

    def neumann_flux(self, R: float) -> float:
        """-V'(R), the inward flux the profile carries at the inner radius."""
        return -float(self.derivative(R))

    __call__ = value


@dataclass(frozen=True)
class OutwardFamilyParams:
    """Parameter ledger of the outward-drift comparison family."""

    role: str
    l: float
    delta: float
    L: float
    theta: float
    gamma: float
    k: float


def outward_family_params(role: str, c: float, p: float, m: float, j: float,
                          theta: float = 1.0, gamma: float = 1.0) -> OutwardFamilyParams:
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if m < -1.0:
        raise ValueError("drift exponent m must be >= -1")
    if m + j >= 1.0:
        raise ValueError("outward family requires m + j < 1")
    if theta <= 0 or gamma <= 0:
        raise ValueError("theta and gamma must be positive")
    L = 1.0 - m - j
    if role == "upper":
        l = 2.0 / (1.0 - p)
        delta = (1.0 + m + j) / (1.0 - p)
    elif role == "lower":
        l = 1.0 / (1.0 - p)
        delta = (m + j) / (1.0 - p)
    else:
        raise ValueError("role must be 'upper' or 'lower'")
    return OutwardFamilyParams(role=role, l=l, delta=delta, L=L,
                               theta=theta, gamma=gamma, k=c ** (-L))


def outward_test_function(role: str, c: float, p: float, m: float, j: float,
                          theta: float = 1.0, gamma: float = 1.0) -> TestFunctionProfile:
    """Comparison family for outward drifts B ~ r^m, reaction ~ r^-j, m+j < 1.

    f(r) = theta c^-delta (gamma + r^-k) with k = c^-L.  The upper member
    uses l = 2/(1-p), delta = (1+m+j)/(1-p); the lower member uses
    l = 1/(1-p), delta = (m+j)/(1-p); both use L = 1-m-j.
    """
    if not c > 0:
        raise ValueError("cutoff c must be positive")
    pars = outward_family_params(role, c, p, m, j, theta, gamma)
    amp = theta * c ** (-pars.delta)
    k = pars.k

    def f(r):
        return amp * (gamma + r ** (-k))

    def f_prime(r):
        return -amp * k * r ** (-k - 1.0)

    def f_double_prime(r):
        return amp * k * (k + 1.0) * r ** (-k - 2.0)

    return TestFunctionProfile(role=role, c=c, l=pars.l, f=f, f_prime=f_prime,
                               f_double_prime=f_double_prime,
                               params={"family": "outward", "m": m, "j": j, "p": p,
                                       "l": pars.l, "delta": pars.delta, "L": pars.L,
                                       "theta": theta, "gamma": gamma, "k": k})


def inward_test_function(role: str, c: float, p: float, m: float, k: float,
                         gamma: float = 1.0) -> TestFunctionProfile:
    """Comparison family for inward drifts B ~ -r^m with m > -1.

    Both roles use l = 2/(1-p).  The lower member has
    f(r) = exp(2 k c^(m+1) - k r^(m+1)); the upper member has
    f(r) = gamma exp(k c^(m+1) / 2 - k r^(m+1)).
    """
    if not m > -1.0:
        raise ValueError("inward family requires m > -1")
    if not (k > 0 and gamma > 0 and c > 0):
        raise ValueError("c, k and gamma must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    mp1 = m + 1.0
    if role == "lower":
        offset = 2.0 * k * c ** mp1
        amp = 1.0
    elif role == "upper":
        offset = 0.5 * k * c ** mp1
        amp = gamma
    else:
        raise ValueError("role must be 'upper' or 'lower'")

    def f(r):
        with np.errstate(over="ignore"):
            return amp * np.exp(offset - k * np.asarray(r, dtype=float) ** mp1)

    def f_prime(r):
        r = np.asarray(r, dtype=float)
        return -k * mp1 * r ** m * f(r)

    def f_double_prime(r):
        r = np.asarray(r, dtype=float)
        return (k ** 2 * mp1 ** 2 * r ** (2.0 * m)
                - k * m * mp1 * r ** (m - 1.0)) * f(r)

    return TestFunctionProfile(role=role, c=c, l=2.0 / (1.0 - p), f=f,
                               f_prime=f_prime, f_double_prime=f_double_prime,
                               params={"family": "inward", "m": m, "p": p,
                                       "k": k, "gamma": gamma})


# ---------------------------------------------------------------------------
# existence certificate via iterated exponentials

_LOG_CAP = 700.0  # exp arguments beyond this overflow float64


def iterated_exp_log(n: int, r):
    """log of exp^(n)(r), i.e. exp^(n-1)(r); raises on float overflow."""
    if n < 1:
        raise ValueError("iteration count must be >= 1")
    x = np.asarray(r, dtype=float)
    for _ in range(n - 1):
        if np.any(x > _LOG_CAP):
            raise OverflowError
        x = np.exp(x)
    return x


def max_representable_exp_iterations(R: float) -> int:
    n = 1
    while True:
        try:
            logf = iterated_exp_log(n + 1, R)
        except OverflowError:
            return n
        if np.any(np.asarray(logf) > _LOG_CAP):
            return n
        n += 1


@dataclass(frozen=True)
class CertificateResult:
    """Upper-solution certificate U(r) = gamma + (h/F(R)) e^(-int_R^r F)."""

    N: int
    h: float
    R: float
    gamma: float
    p: float
    C2: float
    verified: bool
    margin: float              # min over the grid of p log(gamma) - LHS, in log units
    gamma_required: float      # smallest gamma that verifies on the grid
    U: Callable
    U_prime: Callable


def existence_certificate(N: int, h: float, R: float, gamma: float, p: float,
                          C2: float = 1.0, span: float = 12.0,
                          points: int = 4001) -> CertificateResult:
    """Build the iterated-exponential upper solution and verify it.

    With F = exp^(N), U(r) = gamma + (h/F(R)) exp(-int_R^r F(s) ds)
    satisfies U'(R) = -h, and is an upper solution whenever

        (C2 + 1) (h / F(R)) F(r)^2 e^(-int_R^r F)  <=  gamma^p / F(r)

    holds for all r >= R.  The check is done in log space on a dense grid
    over [R, R + span]; the left side is eventually decreasing in r, which
    is asserted at the grid's tail, so the grid minimum certifies the
    inequality beyond the grid as well.
    """
    if not (h > 0 and gamma > 0 and R > 0 and C2 > 0):
        raise ValueError("h, gamma, R and C2 must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    try:
        log_f_at_r0 = float(iterated_exp_log(N, R))
        if log_f_at_r0 > _LOG_CAP:
            raise OverflowError
    except OverflowError:
        n_max = max_representable_exp_iterations(R)
        raise CertificateOverflowError(
            f"exp^({N})({R}) overflows float64; largest representable "
            f"iteration count at R={R} is N={n_max}", n_max) from None

    # shrink the grid span until F stays representable on all of it
    r_hi = R + span
    while True:
        try:
            log_f_hi = float(iterated_exp_log(N, r_hi))
        except OverflowError:
            log_f_hi = np.inf
        if log_f_hi <= _LOG_CAP or r_hi <= R * (1 + 1e-12):
            break
        r_hi = R + 0.5 * (r_hi - R)

    r = np.linspace(R, r_hi, points)
    log_f = iterated_exp_log(N, r)
    f_vals = np.exp(log_f)
    int_f = integrate.cumulative_trapezoid(f_vals, r, initial=0.0)

    lhs = math.log(C2 + 1.0) + math.log(h) - log_f_at_r0 + 3.0 * log_f - int_f
    tail = lhs[-max(8, points // 100):]
    if not np.all(np.diff(tail) <= 0):
        raise NumericalFailure("certificate check grid too short: the log "
                               "inequality is not yet decreasing at its tail")
    sup_lhs = float(lhs.max())
    margin = p * math.log(gamma) - sup_lhs
    gamma_required = math.exp(sup_lhs / p)

    def U(x):
        x = np.asarray(x, dtype=float)
        acc = np.interp(x, r, int_f)
        # beyond the grid the integral only grows; clamp keeps U ~ gamma
        out = gamma + h / math.exp(min(log_f_at_r0, _LOG_CAP)) * np.exp(-acc)
        return out if out.ndim else float(out)

    def U_prime(x):
        x = np.asarray(x, dtype=float)
        acc = np.interp(x, r, int_f)
        logf_x = iterated_exp_log(N, x)
        out = -h * np.exp(logf_x - log_f_at_r0 - acc)
        return out if out.ndim else float(out)

    return CertificateResult(N=N, h=h, R=R, gamma=gamma, p=p, C2=C2,
                             verified=margin >= 0.0, margin=margin,
                             gamma_required=gamma_required, U=U, U_prime=U_prime)


# ---------------------------------------------------------------------------
# auxiliary linear problem for the critical inward drift -B0/r
#
# g'' + (mu/r - 4/((1-p)(c-r)))g' - (2 mu / ((1-p) r (c-r))) g = 0,
# g(R) = 1, 0 < g <= 1 maximal.  Multiplying by the integrating factor
# r^mu (c-r)^(4/(1-p)) and integrating twice (boundedness at r = c kills
# the homogeneous flux constant) gives
#
#   g(r) = 1 - (2 mu/(1-p)) int_R^r z^-mu (c-z)^(-4/(1-p))
#                              int_z^c s^(mu-1) (c-s)^q g(s) ds dz,
#
# with q = (3+p)/(1-p).  Substituting s = z + (c-z) t in the inner
# integral cancels the (c-z) powers exactly (q + 1 = 4/(1-p)), leaving a
# completely regular kernel; the same substitution is used for v_c.


def _kernel_exponent(p: float) -> float:
    return (3.0 + p) / (1.0 - p)


def _jacobi_rule(p: float, n_nodes: int = 24):
    """Nodes/weights for int_0^1 (1-t)^q psi(t) dt with q = (3+p)/(1-p)."""
    q = _kernel_exponent(p)
    x, w = roots_jacobi(n_nodes, q, 0.0)
    t = 0.5 * (x + 1.0)
    w = w * 0.5 ** (q + 1.0)
    return t, w


def _auxiliary_grid(c: float, R: float, n_side: int = 260) -> np.ndarray:
    """Nodes on [R, c] clustered at both ends (boundary layer at R)."""
    xi_left = np.geomspace(1e-9, 0.5, n_side)
    xi_right = 1.0 - np.geomspace(1e-9, 0.5, n_side)[::-1]
    xi = np.unique(np.concatenate(([0.0], xi_left, xi_right, [1.0])))
    return R + (c - R) * xi


@dataclass(frozen=True)
class AuxiliaryLinearResult:
    """Maximal solution of the auxiliary linear problem on [R, c)."""

    c: float
    mu: float
    p: float
    R: float
    r: np.ndarray
    g: np.ndarray
    g_prime_at_R: float
    defect: float
    iterations: int
    used_direct_solve: bool

    def interp(self, x):
        return np.interp(x, self.r, self.g)

    def g_prime(self, x):
        """g'(r) from the integrated flux identity (stable at both ends)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t, w = _jacobi_rule(self.p)
        pts = x[:, None] + (self.c - x)[:, None] * t[None, :]
        vals = (pts ** (self.mu - 1.0)) * np.interp(pts, self.r, self.g)
        inner = vals @ w
        out = -(2.0 * self.mu / (1.0 - self.p)) * x ** (-self.mu) * inner
        return out if out.shape != (1,) else float(out[0])

    def g_double_prime(self, x):
        x = np.asarray(x, dtype=float)
        gp = self.g_prime(x)
        gv = np.interp(x, self.r, self.g)
        drift = self.mu / x - 4.0 / ((1.0 - self.p) * (self.c - x))
        kill = 2.0 * self.mu / ((1.0 - self.p) * x * (self.c - x))
        return -drift * gp + kill * gv


def solve_g_auxiliary(c: float, mu: float, p: float, R: float,
                      grid: np.ndarray | None = None, tol: float = 1e-12,
                      max_iter: int = 400) -> AuxiliaryLinearResult:
    """Solve the auxiliary linear problem by its integral identity.

    Fixed-point iteration from g = 1 is tried first; when the kernel's
    spectral radius exceeds one (inner drift ratio mu >= 1 with large c)
    the iteration diverges, and the same discretized identity is solved
    directly as the dense linear system (I + K) g = 1.
    """
    if not (mu > 0 and c > R > 0):
        raise ValueError("need mu > 0 and c > R > 0")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    z = _auxiliary_grid(c, R) if grid is None else np.asarray(grid, dtype=float)
    if z[0] != R or z[-1] != c or np.any(np.diff(z) <= 0):
        raise ValueError("grid must increase strictly from R to c")
    n = z.size
    t, w = _jacobi_rule(p)
    pref = 2.0 * mu / (1.0 - p)
    pts = z[:, None] + (c - z)[:, None] * t[None, :]          # (n, nj)
    fac = w[None, :] * pts ** (mu - 1.0)                       # (n, nj)
    zmu = z ** (-mu)

    def apply_kernel(g):
        vals = np.interp(pts, z, g)
        wdens = pref * zmu * (fac * vals).sum(axis=1)
        return integrate.cumulative_trapezoid(wdens, z, initial=0.0)

    g = np.ones(n)
    changes = []
    used_direct = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        g_new = 1.0 - apply_kernel(g)
        change = float(np.max(np.abs(g_new - g)))
        changes.append(change)
        g = g_new
        if change <= tol:
            break
        if len(changes) >= 3 and changes[-1] > changes[-2] > changes[-3]:
            used_direct = True
            break
        if not np.isfinite(change):
            used_direct = True
            break
    else:
        used_direct = True

    if used_direct:
        kernel_cols = np.empty((n, n))
        eye = np.eye(n)
        for col in range(n):
            kernel_cols[:, col] = apply_kernel(eye[:, col])
        g = np.linalg.solve(np.eye(n) + kernel_cols, np.ones(n))

    defect = float(np.max(np.abs(g - (1.0 - apply_kernel(g)))))
    if defect > max(tol * 100.0, 1e-9):
        raise NumericalFailure("auxiliary linear solve did not satisfy its "
                               f"integral identity (defect {defect:g})",
                               residual=defect)
    if np.any(g <= 0.0) or np.any(g > 1.0 + 1e-9):
        raise NumericalFailure("auxiliary solution escaped (0, 1]",
                               residual=defect)

    inner_at_R = float((fac[0] * np.interp(pts[0], z, g)).sum())
    g_prime_at_R = -pref * R ** (-mu) * inner_at_R
    return AuxiliaryLinearResult(c=c, mu=mu, p=p, R=R, r=z, g=g,
                                 g_prime_at_R=g_prime_at_R, defect=defect,
                                 iterations=iterations,
                                 used_direct_solve=used_direct)


def v_c_integral(c: float, mu: float, p: float, R: float, r: float) -> float:
    """The companion integral v_c(r) of the auxiliary problem.

    v_c(r) = int_R^r z^-mu (c-z)^(-4/(1-p)) int_z^c s^(mu-1)(c-s)^q ds dz
    with q = (3+p)/(1-p), evaluated by adaptive quadrature of the
    regularized outer integrand (the (c-z) powers cancel exactly).
    v_c(R) = 0 and v_c is nondecreasing.
    """
    if not (mu > 0 and c > R > 0):
        raise ValueError("need mu > 0 and c > R > 0")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if not R <= r <= c:
        raise ValueError("need R <= r <= c")
    if r == R:
        return 0.0
    t, w = _jacobi_rule(p, n_nodes=32)

    def outer(zv):
        pts = zv + (c - zv) * t
        return zv ** (-mu) * float((w * pts ** (mu - 1.0)).sum())

    val, err = integrate.quad(outer, R, r, epsabs=1e-10, epsrel=1e-10, limit=200)
    if not math.isfinite(val):
        raise NumericalFailure("quadrature for v_c failed", residual=err)
    return float(val)


def v_c_limit(mu: float, p: float) -> float:
    """Large-c limit of v_c(c) in rescaled variables (finite for mu < 1).

    lim v_c(c) = int_0^1 y^-mu (1-y)^(-4/(1-p))
                          int_y^1 t^(mu-1) (1-t)^q dt dy;
    the inner integral regularizes the (1-y) powers exactly, leaving the
    y^-mu factor, integrable only when mu < 1.
    """
    if not 0.0 < mu < 1.0:
        raise ValueError("the rescaled limit is finite only for mu in (0, 1)")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    t, w = _jacobi_rule(p, n_nodes=32)

    def outer(y):
        pts = y + (1.0 - y) * t
        return y ** (-mu) * float((w * pts ** (mu - 1.0)).sum())

    val, _ = integrate.quad(outer, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12,
                            limit=200, points=[0.0])
    return float(val)


def g_prime_bracket(c: float, mu: float, p: float, R: float) -> tuple[float, float]:
    """Two-sided bracket for -g'(R) from the integral identity.

    With gamma_hat = exp(-(2 mu/(1-p)) v_c(c)) a uniform lower bound for
    g (via the companion integral) and g <= 1,

      gamma_hat * base  <=  -g'(R)  <=  base,
      base = (2 mu/(1-p)) R^-mu int_0^1 (R + (c-R)t)^(mu-1) (1-t)^q dt.

    Both ends scale like c^(mu-1).  For mu >= 1, v_c(c) grows with c and
    the lower end degenerates toward zero (it remains a valid bound).
    """
    t, w = _jacobi_rule(p, n_nodes=32)
    pts = R + (c - R) * t
    base = (2.0 * mu / (1.0 - p)) * R ** (-mu) * float((w * pts ** (mu - 1.0)).sum())
    vcc = v_c_integral(c, mu, p, R, c)
    lo = math.exp(max(-745.0, -(2.0 * mu / (1.0 - p)) * vcc)) * base
    return lo, base
