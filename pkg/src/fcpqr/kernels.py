"""Reproducing kernels, Gram matrices, the roughness-penalty matrix, and
evaluation of functional coefficients in representer form.

A fitted coefficient curve is an intercept plus a kernel expansion anchored
at the observation grid; `RepresenterCoefficients` stores the finite
parameterization and `evaluate_coefficients` turns it back into curve values.
"""

from dataclasses import dataclass

import numpy as np


KERNEL_FAMILIES = ("gaussian", "laplace", "polynomial")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its scalar parameters.

    family : one of "gaussian", "laplace", "polynomial".
    sigma : bandwidth for gaussian/laplace, additive offset for polynomial.
    degree : polynomial degree (polynomial only).
    """

    family: str = "gaussian"
    sigma: float = 0.2
    degree: int = 1

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not self.sigma > 0:
            raise ValueError("kernel sigma must be positive")
        if self.family == "polynomial" and self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")

    def to_string(self):
        if self.family == "polynomial":
            return f"{self.family}:{self.sigma:g},{self.degree}"
        return f"{self.family}:{self.sigma:g}"

    @classmethod
    def from_string(cls, text):
        """Parse "family:sigma[,degree]", e.g. "gaussian:0.2"."""
        family, _, rest = text.partition(":")
        family = family.strip().lower()
        if not rest:
            raise ValueError(f"kernel spec {text!r} missing parameters")
        parts = [p.strip() for p in rest.split(",")]
        try:
            sigma = float(parts[0])
            degree = int(parts[1]) if len(parts) > 1 else 1
        except ValueError as exc:
            raise ValueError(f"cannot parse kernel spec {text!r}") from exc
        return cls(family=family, sigma=sigma, degree=degree)


def kernel_eval(spec: KernelSpec, s, t):
    """Evaluate K(s, t); symmetric in its arguments, vectorizes over arrays."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if spec.family == "gaussian":
        return np.exp(-((s - t) ** 2) / (2.0 * spec.sigma**2))
    if spec.family == "laplace":
        return np.exp(-np.abs(s - t) / spec.sigma)
    # polynomial on scalar inputs: (s*t + sigma^2)^degree
    return (s * t + spec.sigma**2) ** spec.degree


def gram_matrix(spec: KernelSpec, grid):
    """m x m matrix with entry (j, l) = K(s_j, s_l)."""
    grid = np.asarray(grid, dtype=float)
    return kernel_eval(spec, grid[:, None], grid[None, :])


def penalty_matrix(gram, p, d):
    """Block-diagonal roughness penalty: p + d copies of the Gram matrix.

    Acts on the stacked kernel coefficients (b_1, ..., b_p, c_1, ..., c_d).
    """
    gram = np.asarray(gram, dtype=float)
    return np.kron(np.eye(p + d), gram)


@dataclass
class RepresenterCoefficients:
    """Finite parameterization of the fitted coefficient curves.

    Component k <= p evaluates to xi_k + sum_j b[k, j] K(s, grid[j]); the
    threshold components evaluate to nu_l + sum_j c[l, j] K(s, grid[j]).
    """

    xi: np.ndarray
    nu: np.ndarray
    b: np.ndarray
    c: np.ndarray
    grid: np.ndarray

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float).reshape(-1)
        self.nu = np.asarray(self.nu, dtype=float).reshape(-1)
        m = len(np.asarray(self.grid))
        self.grid = np.asarray(self.grid, dtype=float).reshape(m)
        self.b = np.asarray(self.b, dtype=float).reshape(len(self.xi), m)
        self.c = np.asarray(self.c, dtype=float).reshape(len(self.nu), m)
        for name, arr in (("xi", self.xi), ("nu", self.nu),
                          ("b", self.b), ("c", self.c)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def p(self):
        return len(self.xi)

    @property
    def d(self):
        return len(self.nu)

    def to_dict(self):
        return {
            "xi": self.xi.tolist(),
            "nu": self.nu.tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "grid": self.grid.tolist(),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(xi=payload["xi"], nu=payload["nu"], b=payload["b"],
                   c=payload["c"], grid=payload["grid"])


def evaluate_coefficients(coef: RepresenterCoefficients, spec: KernelSpec, s):
    """Evaluate all p + d coefficient curves at s.

    Returns shape (p + d,) for scalar s and (p + d, len(s)) for array s.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    ks = kernel_eval(spec, s_arr[:, None], coef.grid[None, :])  # (ns, m)
    top = coef.xi[:, None] + coef.b @ ks.T
    bottom = coef.nu[:, None] + coef.c @ ks.T
    out = np.vstack([top, bottom])
    if np.isscalar(s) or np.asarray(s).ndim == 0:
        return out[:, 0]
    return out
