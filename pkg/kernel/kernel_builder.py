from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np
from scipy.linalg import eigh

from kernel.site_space import SiteSpace
from utils.errors import KernelSpectrumError
from utils.validators import symmetry_residual, validate_square

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-3
HERMITIAN_TOL = 1e-12
NEGATIVE_EIGEN_TOL = 1e-10
KERNEL_TYPES = ("diagonal", "shrunk_sine", "rbf_contraction", "random_contraction", "explicit")


def symmetrize_weighted(matrix: np.ndarray, space: SiteSpace) -> np.ndarray:
    """D^{1/2} M D^{1/2} with D = diag(weights)."""
    sq = space.sqrt_weights
    return sq[:, None] * np.asarray(matrix, dtype=float) * sq[None, :]


def unsymmetrize_weighted(matrix: np.ndarray, space: SiteSpace) -> np.ndarray:
    """Inverse of :func:`symmetrize_weighted`."""
    inv = 1.0 / space.sqrt_weights
    return inv[:, None] * np.asarray(matrix, dtype=float) * inv[None, :]


@dataclass(frozen=True)
class KernelSpec:
    type: str
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.type not in KERNEL_TYPES:
            raise ValueError(f"Unknown kernel type '{self.type}'. Expected one of {', '.join(KERNEL_TYPES)}")


@dataclass(frozen=True, eq=False)
class KernelOperator:
    """Correlation kernel K(x_i, x_j) on a weighted site space.

    Spectral statements refer to the symmetrized matrix S = D^{1/2} K D^{1/2}.
    """

    matrix: np.ndarray
    space: SiteSpace
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        ok, errs = validate_square(m, self.space.n)
        if not ok:
            raise ValueError("; ".join(errs))
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"Spectral margin epsilon must lie in (0, 1), got {self.epsilon}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.space.n

    def symmetrized(self) -> np.ndarray:
        return symmetrize_weighted(self.matrix, self.space)

    def eigenvalues(self) -> np.ndarray:
        s = self.symmetrized()
        return eigh(0.5 * (s + s.T), eigvals_only=True)

    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()


@dataclass
class KernelDiagnostics:
    hermiticity_residual: float
    eigen_min: float
    eigen_max: float
    trace: float
    weighted_trace: float
    spectral_margin: float
    epsilon: float
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hermiticity_residual": self.hermiticity_residual,
            "eigen_range": [self.eigen_min, self.eigen_max],
            "trace": self.trace,
            "weighted_trace": self.weighted_trace,
            "spectral_margin": self.spectral_margin,
            "epsilon": self.epsilon,
            "violations": list(self.violations),
            "ok": self.ok,
        }


def validate_kernel(kernel: KernelOperator) -> KernelDiagnostics:
    s = kernel.symmetrized()
    residual = symmetry_residual(s)
    eig = eigh(0.5 * (s + s.T), eigvals_only=True)
    eig_min, eig_max = float(eig[0]), float(eig[-1])
    trace = float(np.trace(s))
    weighted_trace = float(np.sum(np.diag(kernel.matrix) * kernel.space.weights))
    margin = 1.0 - eig_max

    violations: List[str] = []
    if residual > HERMITIAN_TOL:
        violations.append(f"hermiticity violated (residual {residual:.3e})")
    if eig_min < -NEGATIVE_EIGEN_TOL:
        violations.append(f"positivity violated (min eigenvalue {eig_min:.3e})")
    if eig_max >= 1.0 - HERMITIAN_TOL:
        violations.append("strictness violated (eigenvalue reaches 1)")
    elif eig_max > 1.0 - kernel.epsilon + HERMITIAN_TOL:
        violations.append(f"spectral margin {margin:.3e} below epsilon {kernel.epsilon:.3e}")
    if abs(trace - weighted_trace) > 1e-10 * max(1.0, abs(trace)):
        violations.append("trace mismatch between S and weighted diagonal of K")

    return KernelDiagnostics(
        hermiticity_residual=residual,
        eigen_min=eig_min,
        eigen_max=eig_max,
        trace=trace,
        weighted_trace=weighted_trace,
        spectral_margin=margin,
        epsilon=kernel.epsilon,
        violations=violations,
    )


class KernelBuilder:
    """Builds correlation kernels from a :class:`KernelSpec`.

    Kernels whose symmetrized spectrum exceeds ``1 - epsilon`` are scaled down
    (or rejected when ``rescale`` is off).
    """

    def __init__(self, epsilon: float = DEFAULT_EPSILON, rescale: bool = True, rescale_budget: int = 3):
        self.epsilon = epsilon
        self.rescale = rescale
        self.rescale_budget = rescale_budget

    def build(self, space: SiteSpace, spec: KernelSpec) -> KernelOperator:
        p = spec.params
        if spec.type == "diagonal":
            s = self._diagonal(space, p)
        elif spec.type == "shrunk_sine":
            s = symmetrize_weighted(self._shrunk_sine(space, p), space)
        elif spec.type == "rbf_contraction":
            s = symmetrize_weighted(self._rbf(space, p), space)
        elif spec.type == "random_contraction":
            s = self._random_contraction(space, p)
        else:
            s = symmetrize_weighted(self._explicit(space, p), space)

        s = self._enforce_spectrum(s, spec.type)
        kernel = KernelOperator(unsymmetrize_weighted(s, space), space, self.epsilon)
        logger.info("Built %s kernel on %d sites (max eigenvalue %.6g)", spec.type, space.n, float(kernel.eigenvalues()[-1]))
        return kernel

    def _diagonal(self, space: SiteSpace, p: Dict[str, Any]) -> np.ndarray:
        values = np.atleast_1d(np.asarray(p.get("values", p.get("k")), dtype=float))
        if values.size == 1:
            values = np.full(space.n, float(values[0]))
        if values.size != space.n:
            raise ValueError(f"diagonal kernel needs {space.n} values, got {values.size}")
        return np.diag(values * space.weights)

    def _shrunk_sine(self, space: SiteSpace, p: Dict[str, Any]) -> np.ndarray:
        alpha = float(p.get("alpha", 0.9))
        rho = float(p.get("density", 1.0))
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"shrunk_sine needs 0 < alpha < 1, got {alpha}")
        if rho <= 0.0:
            raise ValueError(f"shrunk_sine needs a positive density, got {rho}")
        diff = space.differences()
        off = ~np.eye(space.n, dtype=bool)
        k = np.full(diff.shape, alpha * rho)
        k[off] = alpha * np.sin(np.pi * rho * diff[off]) / (np.pi * diff[off])
        return k

    def _rbf(self, space: SiteSpace, p: Dict[str, Any]) -> np.ndarray:
        lengthscale = float(p.get("lengthscale", 1.0))
        scale = float(p.get("scale", 0.5))
        if lengthscale <= 0.0 or scale <= 0.0:
            raise ValueError("rbf_contraction needs positive lengthscale and scale")
        diff = space.differences()
        return scale * np.exp(-0.5 * (diff / lengthscale) ** 2)

    def _random_contraction(self, space: SiteSpace, p: Dict[str, Any]) -> np.ndarray:
        seed = int(p.get("seed", 0))
        lam_max = float(p.get("lambda_max", 0.9))
        rank = int(p.get("rank", space.n))
        if not 0.0 < lam_max <= 1.0 - self.epsilon:
            raise KernelSpectrumError(f"random_contraction lambda_max {lam_max} outside (0, 1 - epsilon]")
        if not 1 <= rank <= space.n:
            raise ValueError(f"random_contraction rank must lie in [1, {space.n}], got {rank}")
        rng = np.random.default_rng(seed)
        q, r = np.linalg.qr(rng.standard_normal((space.n, space.n)))
        q = q * np.sign(np.diag(r))
        eig = np.zeros(space.n)
        eig[:rank] = lam_max * rng.uniform(0.05, 1.0, rank)
        eig[0] = lam_max
        s = (q * eig) @ q.T
        return 0.5 * (s + s.T)

    def _explicit(self, space: SiteSpace, p: Dict[str, Any]) -> np.ndarray:
        m = np.asarray(p.get("matrix"), dtype=float)
        ok, errs = validate_square(m, space.n)
        if not ok:
            raise ValueError("explicit kernel: " + "; ".join(errs))
        residual = symmetry_residual(m)
        if residual > HERMITIAN_TOL:
            raise ValueError(f"explicit kernel is not Hermitian (residual {residual:.3e})")
        return m

    def _enforce_spectrum(self, s: np.ndarray, kind: str) -> np.ndarray:
        s = 0.5 * (s + s.T)
        ceiling = 1.0 - self.epsilon
        for attempt in range(self.rescale_budget + 1):
            eig = eigh(s, eigvals_only=True)
            if eig[0] < -NEGATIVE_EIGEN_TOL:
                raise KernelSpectrumError(f"{kind} kernel is not positive semidefinite (min eigenvalue {eig[0]:.3e})")
            if eig[-1] <= ceiling:
                return s
            if not self.rescale:
                raise KernelSpectrumError(f"{kind} kernel has eigenvalue {eig[-1]:.6g} above 1 - epsilon = {ceiling:.6g}")
            if attempt == self.rescale_budget:
                break
            logger.warning("Rescaling %s kernel: max eigenvalue %.6g -> %.6g", kind, eig[-1], ceiling)
            s = s * (ceiling / eig[-1])
        raise KernelSpectrumError(f"{kind} kernel still above 1 - epsilon after {self.rescale_budget} rescales")


def build_kernel(space: SiteSpace, spec: KernelSpec, epsilon: float = DEFAULT_EPSILON, rescale: bool = True) -> KernelOperator:
    return KernelBuilder(epsilon=epsilon, rescale=rescale).build(space, spec)
