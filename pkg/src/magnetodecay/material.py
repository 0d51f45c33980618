"""Lamé and coupling constants plus the exterior magnetic field."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

TRANSVERSAL = "T"
LONGITUDINAL = "L"
MODES = (TRANSVERSAL, LONGITUDINAL)


@dataclass(frozen=True)
class Material:
    lam: float
    mu: float
    kappa: float = 1.0
    beta: float = 1.0
    B: tuple = (1.0, 0.0, 0.0)
    tol: float = 1e-12

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError(f"mu > 0 violated (mu = {self.mu})")
        if not self.lam + 2 * self.mu > 0:
            raise ValidationError(f"lambda + 2 mu > 0 violated (lambda + 2 mu = {self.lam + 2 * self.mu})")
        if not abs(self.lam + self.mu) > self.tol:
            raise ValidationError(f"lambda + mu != 0 violated (lambda + mu = {self.lam + self.mu}); c_T would equal c_L")
        if not self.kappa > 0 or not self.beta > 0:
            raise ValidationError("coupling constants kappa and beta must be positive")
        object.__setattr__(self, "B", tuple(float(b) for b in self.B))
        if len(self.B) != 3:
            raise ValidationError("B must be a 3-vector")

    @property
    def c_T(self) -> float:
        return math.sqrt(self.mu)

    @property
    def c_L(self) -> float:
        return math.sqrt(self.lam + 2 * self.mu)

    def speed(self, mode: str) -> float:
        if mode == TRANSVERSAL:
            return self.c_T
        if mode == LONGITUDINAL:
            return self.c_L
        raise ValidationError(f"unknown mode {mode!r}")

    @property
    def B_vec(self) -> np.ndarray:
        return np.asarray(self.B, dtype=float)

    @property
    def B_mag(self) -> float:
        return float(np.linalg.norm(self.B_vec))

    @property
    def B_hat(self) -> np.ndarray:
        m = self.B_mag
        if m == 0:
            raise ValidationError("B = 0 has no direction")
        return self.B_vec / m

    @classmethod
    def from_speeds(cls, c_T: float, c_L: float, **kw) -> "Material":
        mu = c_T**2
        return cls(lam=c_L**2 - 2 * mu, mu=mu, **kw)

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "mu": self.mu, "kappa": self.kappa, "beta": self.beta, "B": list(self.B)}

    @classmethod
    def from_dict(cls, d: dict) -> "Material":
        try:
            return cls(lam=float(d["lambda"]), mu=float(d["mu"]), kappa=float(d.get("kappa", 1.0)),
                       beta=float(d.get("beta", 1.0)), B=tuple(d.get("B", (1.0, 0.0, 0.0))))
        except KeyError as exc:
            raise ValidationError(f"material is missing {exc.args[0]!r}") from None
