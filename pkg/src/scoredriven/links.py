"""Link functions mapping constrained parameters onto the real line.

``link`` sends natural parameters f to the linked space, ``unlink`` inverts
it and ``jacobian_link`` returns the diagonal of dh/df. ``scaled_score``
combines these with the score and Fisher information into the linked scaled
score that drives the recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from scoredriven import _kernels as K
from scoredriven.errors import (
    DomainError,
    FilterDivergence,
    SingularInformation,
    UnsupportedScaling,
)

__all__ = [
    "Link",
    "IdentityLink",
    "LogLink",
    "LogitLink",
    "information_sqrt",
    "link",
    "unlink",
    "jacobian_link",
    "scaled_score",
    "link_arrays",
    "parse_link",
]

_KIND_CODES = {"identity": K.IDENTITY, "log": K.LOG, "logit": K.LOGIT}


@dataclass(frozen=True)
class Link:
    """One of identity, log(f - a) or logit((f - a) / (b - f))."""

    kind: str
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown link kind {self.kind!r}")
        if self.kind == "log" and not math.isfinite(self.lower):
            raise ValueError("log link needs a finite lower bound")
        if self.kind == "logit" and not (self.lower < self.upper and math.isfinite(self.upper)):
            raise ValueError(f"logit link needs lower < upper, got ({self.lower}, {self.upper})")

    @property
    def code(self) -> int:
        return _KIND_CODES[self.kind]

    @property
    def _a(self) -> float:
        return self.lower if math.isfinite(self.lower) else 0.0

    @property
    def _b(self) -> float:
        return self.upper if math.isfinite(self.upper) else 0.0

    def in_domain(self, f) -> bool:
        return bool(K.in_link_domain(self.code, self._a, self._b, float(f)))

    def link(self, f) -> float:
        if not self.in_domain(f):
            raise DomainError(f"{f} outside the domain of {self}")
        return float(K.link1(self.code, self._a, self._b, float(f)))

    def unlink(self, x) -> float:
        return float(K.unlink1(self.code, self._a, self._b, float(x)))

    def jacobian(self, f) -> float:
        if not self.in_domain(f):
            raise DomainError(f"{f} outside the domain of {self}")
        return float(K.jac1(self.code, self._a, self._b, float(f)))

    def token(self) -> str:
        """Compact text form used by the CLI and model files."""
        if self.kind == "identity":
            return "id"
        if self.kind == "log":
            return "log" if self.lower == 0 else f"log:{self.lower!r}"
        if self.lower == 0 and self.upper == 1:
            return "logit"
        return f"logit:{self.lower!r}:{self.upper!r}"


def IdentityLink() -> Link:
    return Link("identity")


def LogLink(a: float = 0.0) -> Link:
    return Link("log", float(a))


def LogitLink(a: float = 0.0, b: float = 1.0) -> Link:
    return Link("logit", float(a), float(b))


def parse_link(token: str) -> Link:
    """Parse ``id``, ``log[:a]`` or ``logit[:a:b]``."""
    parts = token.strip().lower().split(":")
    head = parts[0]
    try:
        if head in ("id", "identity"):
            if len(parts) != 1:
                raise ValueError
            return IdentityLink()
        if head == "log":
            return LogLink(float(parts[1]) if len(parts) > 1 else 0.0)
        if head == "logit":
            if len(parts) == 1:
                return LogitLink()
            return LogitLink(float(parts[1]), float(parts[2]))
    except (IndexError, ValueError):
        pass
    raise ValueError(f"cannot parse link {token!r}; expected id, log[:a] or logit[:a:b]")


def link_arrays(links):
    """Kernel representation: (kind codes, lower bounds, upper bounds)."""
    kinds = np.array([lk.code for lk in links], dtype=np.int64)
    la = np.array([lk._a for lk in links], dtype=float)
    lb = np.array([lk._b for lk in links], dtype=float)
    return kinds, la, lb


def link(links, f) -> np.ndarray:
    f = np.asarray(f, dtype=float).reshape(-1)
    return np.array([lk.link(v) for lk, v in zip(links, f, strict=True)])


def unlink(links, f_tilde) -> np.ndarray:
    x = np.asarray(f_tilde, dtype=float).reshape(-1)
    return np.array([lk.unlink(v) for lk, v in zip(links, x, strict=True)])


def jacobian_link(links, f) -> np.ndarray:
    f = np.asarray(f, dtype=float).reshape(-1)
    return np.array([lk.jacobian(v) for lk, v in zip(links, f, strict=True)])


def scaled_score(dist, links, f, y, d) -> np.ndarray:
    """Linked scaled score for scaling ``d`` in {0, 0.5, 1}.

    For d = 1/2 the factor is the lower-triangular Cholesky factor J of the
    inverse information (J J^T = I^-1); with non-diagonal information the
    result depends on that convention.
    """
    d = float(d)
    if not dist.supports_scaling(d):
        raise UnsupportedScaling(
            f"scaling {d:g} is not available for {dist.name}; "
            f"supported: {sorted(dist.supported_scalings)}"
        )
    p = dist.check_params(f)
    y = float(dist.check_support(y, p))
    for lk, v in zip(links, p, strict=True):
        if not lk.in_domain(v):
            raise DomainError(f"{v} outside the domain of {lk}")
    if d != 0.0:
        info = dist.fisher_information(p)
        cond = np.linalg.cond(info)
        if not np.isfinite(cond) or cond > K.COND_LIMIT:
            raise SingularInformation(f"Fisher information of {dist.name} is singular at {p.tolist()}")
    kinds, la, lb = link_arrays(links)
    out = np.empty(dist.num_params)
    status = K.scaled_score(dist.code, p, y, kinds, la, lb, d, out, K.workspace(dist.num_params))
    if status == K.SINGULAR:
        raise SingularInformation(f"Fisher information of {dist.name} is singular at {p.tolist()}")
    if status != K.OK:
        raise FilterDivergence(f"scaled score not finite at {p.tolist()} (status {status})")
    return out


def information_sqrt(dist, f) -> np.ndarray:
    """Lower-triangular J with J J^T equal to the inverse Fisher information.

    Columns are read off the same kernel the d = 1/2 scaling uses.
    """
    p = dist.check_params(f)
    dist.fisher_information(p)  # raises UnsupportedScaling where undefined
    k = dist.num_params
    ws = K.workspace(k)
    J = np.empty((k, k))
    for i in range(k):
        e = np.zeros(k)
        e[i] = 1.0
        if K.scale_score(dist.code, p, 0.5, e, ws) != K.OK:
            raise SingularInformation(f"Fisher information of {dist.name} is singular at {p.tolist()}")
        J[:, i] = e
    return J
