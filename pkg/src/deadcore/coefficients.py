"""Radial operator model.

The operator acting on radial profiles is

    L u = A(r) u'' - B(r) u'      on [R, infinity),

with reaction coefficient Lambda(r) > 0 and absorption u^p, 0 < p < 1.
``B > 0`` means the drift pushes mass outward (away from the inner
boundary), ``B < 0`` inward.  Coefficients are power laws (or sums and
tables thereof); the drift exponent ``m``, the reaction decay exponent
``j`` and the drift sign determine which free-boundary regime the
operator falls in and, when a free boundary exists, how its radius
scales with the boundary datum h.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

_KIND_ALIASES = {
    "constant": "constant",
    "power": "power",
    "power-law": "power",
    "power-sum": "power-sum",
    "sum-of-power-laws": "power-sum",
    "tabulated": "tabulated",
}


@dataclass(frozen=True)
class CoefficientSpec:
    """One scalar coefficient of the radial operator.

    kind:
        "constant"   value = sign * prefactor
        "power"      value = sign * prefactor * r**exponent
        "power-sum"  value = sign * sum_k prefactor_k * r**exponent_k
        "tabulated"  linear interpolation of (r, value) samples, clamped
                     to the end values outside the tabulated range
    """

    kind: str
    prefactor: float | tuple[float, ...] = 1.0
    exponent: float | tuple[float, ...] = 0.0
    sign: int = 1
    table_r: tuple[float, ...] | None = None
    table_values: tuple[float, ...] | None = None

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind)
        if kind is None:
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        if kind == "power-sum":
            pre = tuple(np.atleast_1d(np.asarray(self.prefactor, dtype=float)))
            exp = tuple(np.atleast_1d(np.asarray(self.exponent, dtype=float)))
            if len(pre) != len(exp):
                raise ValueError("power-sum needs matching prefactors/exponents")
            object.__setattr__(self, "prefactor", pre)
            object.__setattr__(self, "exponent", exp)
        elif kind == "tabulated":
            if self.table_r is None or self.table_values is None:
                raise ValueError("tabulated coefficient needs table_r/table_values")
            r = tuple(float(x) for x in self.table_r)
            v = tuple(float(x) for x in self.table_values)
            if len(r) != len(v) or len(r) < 2:
                raise ValueError("tabulated coefficient needs >= 2 (r, value) pairs")
            if any(b <= a for a, b in zip(r, r[1:])):
                raise ValueError("tabulated radii must be strictly increasing")
            object.__setattr__(self, "table_r", r)
            object.__setattr__(self, "table_values", v)
        else:
            object.__setattr__(self, "prefactor", float(np.asarray(self.prefactor)))
            object.__setattr__(self, "exponent", float(np.asarray(self.exponent)))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "constant":
            out = np.full_like(r, self.sign * self.prefactor)
        elif self.kind == "power":
            out = self.sign * self.prefactor * r ** self.exponent
        elif self.kind == "power-sum":
            out = np.zeros_like(r)
            for pre, exp in zip(self.prefactor, self.exponent):
                out = out + pre * r ** exp
            out = self.sign * out
        else:
            out = self.sign * np.interp(r, self.table_r, self.table_values)
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "prefactor": self.prefactor, "sign": self.sign}
        if self.kind == "power":
            return {
                "kind": "power",
                "prefactor": self.prefactor,
                "exponent": self.exponent,
                "sign": self.sign,
            }
        if self.kind == "power-sum":
            return {
                "kind": "power-sum",
                "prefactor": list(self.prefactor),
                "exponent": list(self.exponent),
                "sign": self.sign,
            }
        return {
            "kind": "tabulated",
            "r": list(self.table_r),
            "values": list(self.table_values),
            "sign": self.sign,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientSpec":
        kind = _KIND_ALIASES.get(d.get("kind", ""))
        if kind is None:
            raise ValueError(f"unknown coefficient kind {d.get('kind')!r}")
        sign = int(d.get("sign", 1))
        if kind == "tabulated":
            return cls(kind=kind, sign=sign, table_r=tuple(d["r"]),
                       table_values=tuple(d["values"]))
        pre = d.get("prefactor", 1.0)
        exp = d.get("exponent", 0.0)
        if kind == "power-sum":
            return cls(kind=kind, prefactor=tuple(pre), exponent=tuple(exp), sign=sign)
        return cls(kind=kind, prefactor=pre, exponent=exp, sign=sign)


def constant(value: float) -> CoefficientSpec:
    sign = -1 if value < 0 else 1
    return CoefficientSpec("constant", prefactor=abs(value), sign=sign)


def power(prefactor: float, exponent: float, sign: int = 1) -> CoefficientSpec:
    return CoefficientSpec("power", prefactor=prefactor, exponent=exponent, sign=sign)


@dataclass(frozen=True)
class RadialOperator:
    """Coefficient triple (A, B, Lambda) plus the inner radius R.

    A is the diffusion coefficient (order one, bounded and bounded away
    from zero), B the signed drift and Lambda the strictly positive
    reaction coefficient.
    """

    A: CoefficientSpec
    B: CoefficientSpec
    Lambda: CoefficientSpec
    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("inner radius R must be positive")

    def to_dict(self) -> dict:
        return {
            "A": self.A.to_dict(),
            "B": self.B.to_dict(),
            "Lambda": self.Lambda.to_dict(),
            "R": self.R,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RadialOperator":
        return cls(
            A=CoefficientSpec.from_dict(d["A"]),
            B=CoefficientSpec.from_dict(d["B"]),
            Lambda=CoefficientSpec.from_dict(d["Lambda"]),
            R=float(d["R"]),
        )

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "RadialOperator":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class BoundaryCondition:
    """Inner boundary data: flux magnitude (neumann, u'(R) = -h) or
    boundary value (dirichlet, u(R) = h)."""

    kind: str
    h: float

    def __post_init__(self):
        if self.kind not in ("neumann", "dirichlet"):
            raise ValueError("boundary kind must be 'neumann' or 'dirichlet'")
        if not self.h > 0:
            raise ValueError("boundary datum h must be positive")


def evaluate_coefficients(op: RadialOperator, r: float):
    """Evaluate (A, B, Lambda) at radius r >= op.R.

    Raises ValueError for r < R and for a non-positive reaction value.
    """
    if np.any(np.asarray(r) < op.R):
        raise ValueError(f"r={r} is inside the inner radius R={op.R}")
    a, b, lam = op.A(r), op.B(r), op.Lambda(r)
    if np.any(np.asarray(lam) <= 0):
        raise ValueError(f"reaction coefficient is not positive at r={r}")
    return a, b, lam


@dataclass(frozen=True)
class ValidationReport:
    """Sampled sanity check of a radial operator on [R, r_max]."""

    r_min: float
    r_max: float
    samples: int
    a_min: float
    a_max: float
    lambda_min: float
    a_positive: bool
    lambda_positive: bool
    a_bounded: bool
    a_slope: float

    @property
    def ok(self) -> bool:
        return self.a_positive and self.lambda_positive and self.a_bounded


# |log-log slope| above which a sampled diffusion coefficient is flagged
# as escaping any fixed two-sided bound.
_A_SLOPE_TOL = 1e-2


def validate_operator(op: RadialOperator, r_max: float, samples: int = 256) -> ValidationReport:
    """Check the normalization of A and positivity of Lambda on a
    log-spaced grid over [R, r_max].

    A is flagged as unbounded when its log-log slope over the top two
    decades of the grid exceeds a small tolerance; positivity failures
    are flagged, never raised (the report carries the flags).
    """
    if not r_max > op.R:
        raise ValueError("r_max must exceed the inner radius")
    if samples < 2:
        raise ValueError("need at least two samples")
    r = np.geomspace(op.R, r_max, samples)
    a = np.asarray(op.A(r), dtype=float)
    lam = np.asarray(op.Lambda(r), dtype=float)
    a_min, a_max = float(a.min()), float(a.max())
    lam_min = float(lam.min())
    a_positive = a_min > 0
    slope = 0.0
    if a_positive:
        top = r >= max(op.R, r_max / 100.0)
        if top.sum() >= 2 and r[top][-1] > r[top][0]:
            slope = float(np.polyfit(np.log(r[top]), np.log(a[top]), 1)[0])
    return ValidationReport(
        r_min=op.R,
        r_max=r_max,
        samples=samples,
        a_min=a_min,
        a_max=a_max,
        lambda_min=lam_min,
        a_positive=a_positive,
        lambda_positive=lam_min > 0,
        a_bounded=a_positive and abs(slope) <= _A_SLOPE_TOL,
        a_slope=slope,
    )


def infer_power_exponent(spec: CoefficientSpec, r_max: float, r_min: float = 1.0,
                         samples: int = 128) -> tuple[float, int]:
    """Estimate (exponent, sign) of a coefficient by the log-log slope of
    |value| over the top two decades of a log-spaced sample grid.

    A coefficient that vanishes identically on the window returns
    (exponent=-1.0, sign=0): an O(1/r)-or-smaller drift is treated with
    the conventional exponent -1.
    """
    lo = max(r_min, r_max / 100.0)
    r = np.geomspace(lo, r_max, samples)
    v = np.asarray(spec(r), dtype=float)
    if np.all(v == 0):
        return -1.0, 0
    sign = 1 if v[-1] > 0 else -1
    mask = np.abs(v) > 0
    slope = float(np.polyfit(np.log(r[mask]), np.log(np.abs(v[mask])), 1)[0])
    return slope, sign


@dataclass(frozen=True)
class RegimeLabel:
    """Predicted free-boundary behavior of an operator family.

    kind is one of "NoFreeBoundaryAllH", "BorderlineHDependent",
    "PowerLaw", "LogPower" or "Unclassified".  PowerLaw labels carry the
    flux (exponent_N) and boundary-value (exponent_D) growth exponents of
    the free-boundary radius in h; LogPower labels carry the exponent of
    log h.
    """

    kind: str
    exponent_N: float | None = None
    exponent_D: float | None = None
    log_power: float | None = None

    def __post_init__(self):
        if self.kind == "PowerLaw":
            if self.exponent_N is None or self.exponent_D is None:
                raise ValueError("PowerLaw label needs both exponents")
        elif self.kind == "LogPower":
            if self.log_power is None:
                raise ValueError("LogPower label needs log_power")
        elif self.exponent_N is not None or self.exponent_D is not None \
                or self.log_power is not None:
            raise ValueError(f"{self.kind} label carries no exponents")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.exponent_N is not None:
            d["exponent_N"] = self.exponent_N
        if self.exponent_D is not None:
            d["exponent_D"] = self.exponent_D
        if self.log_power is not None:
            d["log_power"] = self.log_power
        return d


_BORDER_TOL = 1e-12


def classify_regime(m: float, drift_sign: int, j: float, p: float) -> RegimeLabel:
    """Classify the (m, drift sign, j) parameter point, 0 < p < 1.

    Outward or vanishing drift (sign >= 0):
      m + j > 1 (m > -1, j <= 2)   no free boundary for any h
      m + j = 1                    free boundary only for small h
      m + j < 1 (m >= -1, j < 2)   power law: r*(h) ~ h^alpha with
          flux case   alpha = (1-p)/((1-m-j) p)   for m+j in [0, 1)
                      alpha = (1-p)/(p-m-j)       for m+j < 0
          value case  alpha = (1-p)/(1-m-j)
    Inward drift (sign = -1), m > -1: r*(h) ~ (log h)^(1/(1+m)).

    The critical inward case m = -1 (drift -B0/r) is not classified here;
    see predicted_exponent_critical.  A drift that vanishes identically
    should be passed as (m=-1, drift_sign=0): an O(1/r)-or-smaller
    nonnegative drift shares the m = -1 exponents.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    s = m + j
    if drift_sign >= 0:
        if abs(s - 1.0) <= _BORDER_TOL:
            return RegimeLabel("BorderlineHDependent")
        if s > 1.0 and m > -1.0 and j <= 2.0:
            return RegimeLabel("NoFreeBoundaryAllH")
        if s < 1.0 and m >= -1.0 and j < 2.0:
            if s >= 0.0:
                exp_n = (1.0 - p) / ((1.0 - s) * p)
            else:
                exp_n = (1.0 - p) / (p - s)
            return RegimeLabel("PowerLaw", exponent_N=exp_n,
                               exponent_D=(1.0 - p) / (1.0 - s))
        return RegimeLabel("Unclassified")
    if m > -1.0:
        return RegimeLabel("LogPower", log_power=1.0 / (1.0 + m))
    return RegimeLabel("Unclassified")


def predicted_exponent_critical(mu: float, p: float, bc_kind: str) -> float:
    """Free-boundary growth exponent for the critical inward drift
    B(r) = -B0/r with mu = B0/A0 > 0 and unit-order reaction.

    Flux condition:  (1-p) / (1 + p + mu (1-p));  boundary-value
    condition: (1-p)/2, independent of mu.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if bc_kind == "neumann":
        return (1.0 - p) / (1.0 + p + mu * (1.0 - p))
    if bc_kind == "dirichlet":
        return (1.0 - p) / 2.0
    raise ValueError("bc_kind must be 'neumann' or 'dirichlet'")
