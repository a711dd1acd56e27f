"""Product-term design map, parameter container and coefficient constraints.

Coefficients are laid out as ``[intercept, x_0 .. x_{p-1}, pairs...]`` with
pairs sorted lexicographically. Each design entry is the product of two
coordinates of the augmented vector ``z = (1, x)``; ``factor_index`` holds
those two positions, which is all the E-step needs to map design moments
onto Gaussian moments of ``z``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ModelSpec:
    p: int
    pairs: tuple = ()
    free_mask: tuple = None

    def __post_init__(self):
        if int(self.p) < 1:
            raise ValueError("p must be at least 1")
        object.__setattr__(self, "p", int(self.p))
        pairs = []
        for pair in self.pairs:
            j, k = (int(v) for v in pair)
            if j > k:
                j, k = k, j
            if j == k or j < 0 or k >= self.p:
                raise ValueError(f"invalid product pair {tuple(pair)} for p={self.p}")
            pairs.append((j, k))
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate product pairs")
        object.__setattr__(self, "pairs", tuple(sorted(pairs)))
        d = 1 + self.p + len(pairs)
        if self.free_mask is None:
            mask = (True,) * d
        else:
            mask = tuple(bool(v) for v in self.free_mask)
            if len(mask) != d:
                raise ValueError(f"free_mask has length {len(mask)}, expected {d}")
        object.__setattr__(self, "free_mask", mask)

    @property
    def d(self) -> int:
        return 1 + self.p + len(self.pairs)

    @property
    def free_index(self) -> np.ndarray:
        return np.flatnonzero(self.free_mask)

    @property
    def factor_index(self) -> np.ndarray:
        """(d, 2) positions in z = (1, x) whose product gives each design entry."""
        rows = [(0, 0)] + [(0, j + 1) for j in range(self.p)]
        rows += [(j + 1, k + 1) for j, k in self.pairs]
        return np.array(rows, dtype=int)

    def term(self, index: int) -> tuple:
        """Descriptor of coefficient ``index``: (), (j,) or (j, k)."""
        if index == 0:
            return ()
        if index <= self.p:
            return (index - 1,)
        return self.pairs[index - 1 - self.p]

    def index_of(self, term) -> int:
        term = tuple(sorted(int(v) for v in term))
        if not term:
            return 0
        if len(term) == 1:
            if not 0 <= term[0] < self.p:
                raise KeyError(term)
            return 1 + term[0]
        return 1 + self.p + self.pairs.index(term)

    def order(self, index: int) -> int:
        return len(self.term(index))

    def names(self, labels=None) -> list:
        labels = labels or [f"x{j}" for j in range(self.p)]
        out = ["(Intercept)"]
        out += list(labels)
        out += [f"{labels[j]}:{labels[k]}" for j, k in self.pairs]
        return out

    def with_constraints(self, constrained) -> "ModelSpec":
        mask = list(self.free_mask)
        for i in constrained:
            mask[int(i)] = False
        return ModelSpec(self.p, self.pairs, tuple(mask))

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "pairs": [list(pair) for pair in self.pairs],
            "constrained_zero": [i for i, free in enumerate(self.free_mask) if not free],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ModelSpec":
        try:
            p = int(doc["p"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError("model document needs an integer 'p'") from exc
        base = cls(p, tuple(tuple(pair) for pair in doc.get("pairs", [])))
        constrained = doc.get("constrained_zero", [])
        if any(not 0 <= int(i) < base.d for i in constrained):
            raise ValueError("constrained_zero index out of range")
        return base.with_constraints(constrained)

    @classmethod
    def load(cls, path) -> "ModelSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class Theta:
    beta: np.ndarray
    sigma2_eps: float
    mu: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.sigma2_eps = float(self.sigma2_eps)
        self.mu = np.asarray(self.mu, dtype=float)
        self.Sigma = np.asarray(self.Sigma, dtype=float)

    def flat(self) -> np.ndarray:
        """Unique parameter elements in a fixed order (beta, sigma2, mu, vech Sigma)."""
        iu = np.triu_indices(self.mu.size)
        return np.concatenate([self.beta, [self.sigma2_eps], self.mu, self.Sigma[iu]])

    def copy(self) -> "Theta":
        return Theta(self.beta.copy(), self.sigma2_eps, self.mu.copy(), self.Sigma.copy())

    def to_json(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "sigma2_eps": self.sigma2_eps,
            "mu": self.mu.tolist(),
            "Sigma": self.Sigma.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Theta":
        return cls(doc["beta"], doc["sigma2_eps"], doc["mu"], doc["Sigma"])


def design_vector(spec: ModelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.p,):
        raise ValueError(f"expected {spec.p} predictor values, got shape {x.shape}")
    return design_matrix(spec, x[None, :])[0]


def design_matrix(spec: ModelSpec, X) -> np.ndarray:
    """Row-wise ``design_vector`` for an (..., p) array."""
    X = np.asarray(X, dtype=float)
    parts = [np.ones(X.shape[:-1] + (1,)), X]
    if spec.pairs:
        j, k = np.array(spec.pairs).T
        parts.append(X[..., j] * X[..., k])
    return np.concatenate(parts, axis=-1)


@dataclass
class ValidationReport:
    ok: bool
    message: str = ""
    problems: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def validate_theta(spec: ModelSpec, theta: Theta) -> ValidationReport:
    """Check every Theta invariant; the first violation becomes ``message``."""
    problems = []
    if theta.beta.shape != (spec.d,):
        problems.append(f"beta has shape {theta.beta.shape}, expected ({spec.d},)")
    if theta.mu.shape != (spec.p,) or theta.Sigma.shape != (spec.p, spec.p):
        problems.append("mu/Sigma dimensions do not match p")
    if not problems and not np.isfinite(theta.flat()).all():
        problems.append("non-finite parameter")
    if not theta.sigma2_eps > 0:
        problems.append("nonpositive error variance")
    if not problems:
        fixed = ~np.asarray(spec.free_mask)
        if np.any(theta.beta[fixed] != 0.0):
            problems.append("constraint violated")
        S = theta.Sigma
        if not np.allclose(S, S.T, rtol=1e-12, atol=0.0):
            problems.append("Sigma not symmetric")
        elif np.linalg.eigvalsh((S + S.T) / 2)[0] <= 0:
            problems.append("Sigma not positive definite")
    if problems:
        return ValidationReport(False, problems[0], problems)
    return ValidationReport(True)
