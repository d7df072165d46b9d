"""Dyadic shells and spacetime regions used by the norms and diagnostics."""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import DomainError

KINDS = ("time_slab", "radial_slab", "photonsphere", "cone_dyadic", "interior_dyadic", "cone_block")


def japanese(x):
    """<x> = (1 + x^2)^(1/2)."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + x * x)


@dataclass(frozen=True)
class DyadicAnnulus:
    """A_R = {R <= <r> < 2R} for dyadic R >= 2, and A_1 = {<r> < 2}."""

    R: float

    def __post_init__(self):
        if self.R < 1 or not float(np.log2(self.R)).is_integer():
            raise DomainError(f"R must be a dyadic number >= 1, got {self.R}")

    @property
    def bounds(self):
        """The shell as an r-interval [lo, hi)."""
        lo = 0.0 if self.R == 1 else np.sqrt(self.R ** 2 - 1.0)
        return lo, np.sqrt(4.0 * self.R ** 2 - 1.0)

    def contains(self, r):
        jr = japanese(r)
        if self.R == 1:
            return jr < 2.0
        return (jr >= self.R) & (jr < 2.0 * self.R)


def shells_covering(r_max):
    """All dyadic shells meeting [0, r_max]."""
    out, R = [], 1.0
    while True:
        out.append(DyadicAnnulus(R))
        if japanese(r_max) < 2 * R:
            return out
        R *= 2.0


@dataclass(frozen=True)
class SpacetimeRegion:
    """A region of the exterior, described by simple bounds.

    Every kind may additionally carry an r-window ``[r_lo, r_hi)``; the
    solver-based diagnostics use it to stay in r >= 5M/2 where the static
    and interior time functions coincide.
    """

    kind: str
    t0: float = 0.0
    t1: float = np.inf
    r_lo: float = 0.0
    r_hi: float = np.inf
    T: Optional[float] = None
    R: Optional[float] = None
    U: Optional[float] = None
    M: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown region kind {self.kind!r}")
        if self.t1 < self.t0 or self.r_hi < self.r_lo:
            raise DomainError("empty region bounds")

    # constructors -----------------------------------------------------
    @classmethod
    def time_slab(cls, t0, t1, r_lo=0.0, r_hi=np.inf, M=1.0):
        return cls("time_slab", t0=t0, t1=t1, r_lo=r_lo, r_hi=r_hi, M=M)

    @classmethod
    def radial_slab(cls, r1, r2, t0=0.0, t1=np.inf, M=1.0):
        return cls("radial_slab", t0=t0, t1=t1, r_lo=r1, r_hi=r2, M=M)

    @classmethod
    def photonsphere(cls, M, t0=0.0, t1=np.inf):
        return cls("photonsphere", t0=t0, t1=t1, r_lo=2.5 * M, r_hi=3.5 * M, M=M)

    @classmethod
    def cone_block(cls, T, M=1.0, r_lo=0.0):
        """C_T = {T <= t <= 2T, r <= t}."""
        return cls("cone_block", t0=T, t1=2 * T, T=T, r_lo=r_lo, M=M)

    @classmethod
    def cone_dyadic(cls, T, U, M=1.0, r_lo=0.0):
        """C_T^U = C_T with U < t - r* < 2U."""
        return cls("cone_dyadic", t0=T, t1=2 * T, T=T, U=U, r_lo=r_lo, M=M)

    @classmethod
    def interior_dyadic(cls, T, R, M=1.0, r_lo=0.0):
        """C_T^R = C_T with R < r < 2R."""
        return cls("interior_dyadic", t0=T, t1=2 * T, T=T, R=R, r_lo=r_lo, M=M)

    # geometry ---------------------------------------------------------
    def mask(self, t, r, rstar=None):
        """Boolean membership for broadcastable arrays t, r (and r*)."""
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        m = (t >= self.t0) & (t <= self.t1) & (r >= self.r_lo) & (r < self.r_hi)
        if self.kind == "photonsphere":
            m &= (r >= 2.5 * self.M) & (r <= 3.5 * self.M)
        if self.kind in ("cone_block", "cone_dyadic", "interior_dyadic"):
            m &= r <= t
        if self.kind == "interior_dyadic":
            m &= (r > self.R) & (r < 2 * self.R)
        if self.kind == "cone_dyadic":
            if rstar is None:
                raise DomainError("cone regions need r*")
            u = t - np.asarray(rstar, dtype=float)
            m &= (u > self.U) & (u < 2 * self.U)
        return m

    def descriptor(self):
        """Compact text form used in report tables."""
        d = {k: v for k, v in asdict(self).items() if v is not None and k != "kind"}
        parts = [f"{k}={v:g}" for k, v in d.items() if np.isfinite(v) or k in ("t1", "r_hi")]
        return self.kind + "(" + ",".join(parts) + ")"
