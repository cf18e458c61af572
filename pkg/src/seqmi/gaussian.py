"""Hierarchical Gaussian sequence families with exact mutual information.

Two families are built by the same layered recursion over a 4x4 mixing
matrix with weights (gamma, rho), 3*gamma^2 + rho^2 = 1:

    subvolume  layer l rows mix three independent copies of the layer l-1
               process plus one fresh standard normal per row
    logfamily  layer l rows mix a single carried copy of the layer l-1
               process plus three fresh standard normals per row

Row-mixing by the matrix, row-major flattening, then a chain-link step that
overwrites the covariance of every adjacent-row boundary pair
(Z_{i,4}, Z_{i+1,1}) with

    (2/5) * (cov(Z_{i,3}, Z_{i,4}) + cov(Z_{i+1,1}, Z_{i+1,2})) + 1/5

turns the tree of each layer into a linearly ordered sequence. The whole
construction is maintained analytically as a dense covariance, so bipartite
and two-point mutual information, conditional laws, and per-position KL all
come out exact (log-determinants via Cholesky).

The subvolume family's bipartite MI at the midpoint split grows as a power
law in L = 4^l (fitted exponent about 0.80 for l in 2..6); the logfamily
grows only logarithmically. Both share identical antipodal two-point MI.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    IndexOutOfRange,
    InvalidMixing,
    LayerCapExceeded,
    NonPositiveStd,
    NotPositiveDefinite,
    PrefixLengthMismatch,
    SplitOutOfRange,
)

__all__ = [
    "DEFAULT_GAMMA",
    "DEFAULT_LAYER_CAP",
    "DEFAULT_RHO",
    "ConditionalLaw",
    "CovarianceModel",
    "bipartite_mi_exact",
    "build_covariance",
    "conditional_kl",
    "conditional_law",
    "conditional_stds",
    "gaussian_kl",
    "logdensity_terms",
    "mc_bipartite_mi",
    "mixing_matrix",
    "read_model",
    "sample",
    "sweep_bipartite",
    "twopoint_mi_exact",
    "write_model",
]

DEFAULT_GAMMA = math.sqrt(5.0) / 4.0
DEFAULT_RHO = 0.25
DEFAULT_LAYER_CAP = 7  # L = 4^7 = 16384 -> ~2.1 GB dense f64, the desk-scale ceiling

_PIVOT_FLOOR = 1e-12
_MI_CLAMP = 1e-9
_FAMILIES = ("subvolume", "logfamily")


def mixing_matrix(gamma: float = DEFAULT_GAMMA, rho: float = DEFAULT_RHO) -> np.ndarray:
    return np.array(
        [
            [gamma, gamma, gamma, rho],
            [-gamma, gamma, -gamma, rho],
            [-gamma, -gamma, gamma, rho],
            [gamma, -gamma, -gamma, rho],
        ]
    )


def _symmetrize(m: np.ndarray) -> np.ndarray:
    # force bitwise symmetry (BLAS products are symmetric only up to rounding)
    return np.tril(m) + np.tril(m, -1).T


@dataclass
class ConditionalLaw:
    """Gaussian conditional at one position: N(mean, std^2), std prefix-free."""

    position: int
    mean: float
    std: float

    def __post_init__(self):
        if self.std <= 0:
            raise NonPositiveStd(f"conditional std must be > 0, got {self.std}")


@dataclass
class CovarianceModel:
    """Dense covariance of one family at depth `layers` (L = 4^layers)."""

    family: str
    layers: int
    gamma: float
    rho: float
    cov: np.ndarray
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def length(self) -> int:
        return self.cov.shape[0]

    def __post_init__(self):
        self.cov = np.ascontiguousarray(self.cov, dtype=np.float64)
        self.cov.flags.writeable = False
        self.check_invariants()

    def check_invariants(self) -> None:
        cov = self.cov
        n = cov.shape[0]
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance must be square")
        if n != 4**self.layers:
            raise ValueError(f"length {n} != 4^layers = {4**self.layers}")
        if not np.array_equal(cov, cov.T):
            raise ValueError("covariance is not exactly symmetric")
        if np.max(np.abs(np.diag(cov) - 1.0)) >= 1e-12:
            raise ValueError("diagonal deviates from 1 beyond 1e-12")
        self._chol = _checked_cholesky(cov)

    def chol(self) -> np.ndarray:
        """Lower Cholesky factor, computed once and cached."""
        if self._chol is None:
            self._chol = _checked_cholesky(self.cov)
        return self._chol


def _checked_cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"Cholesky failed: {exc}") from exc
    if np.min(np.diag(factor)) <= _PIVOT_FLOOR:
        raise NotPositiveDefinite(
            f"Cholesky pivot {np.min(np.diag(factor)):.3e} at or below floor {_PIVOT_FLOOR}"
        )
    return factor


def _apply_chain_link(cov: np.ndarray) -> None:
    """Overwrite every adjacent-row boundary covariance in place."""
    L = cov.shape[0]
    if L < 8:
        return
    p = np.arange(3, L - 1, 4)  # flattened index of Z_{i,4}
    q = p + 1  # flattened index of Z_{i+1,1}
    target = 0.4 * (cov[p - 1, p] + cov[q, q + 1]) + 0.2
    cov[p, q] = target
    cov[q, p] = target


def build_covariance(
    family: str,
    layers: int,
    gamma: float = DEFAULT_GAMMA,
    rho: float = DEFAULT_RHO,
    cap: int = DEFAULT_LAYER_CAP,
) -> CovarianceModel:
    """Construct the covariance of the flattened layer-`layers` output."""
    if family not in _FAMILIES:
        raise ValueError(f"family must be one of {_FAMILIES}, got {family!r}")
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    if layers > cap:
        raise LayerCapExceeded(
            f"layers={layers} exceeds cap={cap}"
            f" (4^{layers} = {4**layers} variables); raise the cap explicitly"
        )
    if abs(3.0 * gamma * gamma + rho * rho - 1.0) > 1e-9:
        raise InvalidMixing(
            f"3*gamma^2 + rho^2 = {3*gamma*gamma + rho*rho:.12f} must equal 1"
        )

    mix = mixing_matrix(gamma, rho)
    within = _symmetrize(mix @ mix.T)
    carried = np.diag([1.0, 1.0, 1.0, 0.0]) if family == "subvolume" else np.diag(
        [1.0, 0.0, 0.0, 0.0]
    )
    across = _symmetrize(mix @ carried @ mix.T)

    cov = within.copy()
    _apply_chain_link(cov)
    for level in range(2, layers + 1):
        prev = cov
        n_rows = prev.shape[0]
        cov = np.kron(prev, across)
        blocks = cov.reshape(n_rows, 4, n_rows, 4)
        idx = np.arange(n_rows)
        blocks[idx, :, idx, :] += within - across
        _apply_chain_link(cov)
        if level < layers:
            # intermediate layers get their own positive-definiteness check;
            # the final layer is validated by the model constructor below
            _checked_cholesky(cov)
    return CovarianceModel(family=family, layers=layers, gamma=gamma, rho=rho, cov=cov)


def bipartite_mi_exact(model: CovarianceModel, ell: int) -> float:
    """I(W_{1:ell}; W_{ell+1:L}) in nats.

    Equals (logdet S_X + logdet S_Y - logdet S) / 2; the X-block term
    cancels against the leading part of the full factorization because
    Cholesky factors nest, leaving one fresh factorization of the Y block.
    """
    L = model.length
    if not 1 <= ell <= L - 1:
        raise SplitOutOfRange(f"ell must be in 1..{L - 1}, got {ell}")
    half_logdet_y = float(np.sum(np.log(np.diag(_checked_cholesky(model.cov[ell:, ell:])))))
    tail_of_full = float(np.sum(np.log(np.diag(model.chol())[ell:])))
    value = half_logdet_y - tail_of_full
    if -_MI_CLAMP < value < 0.0:
        return 0.0
    return value


def twopoint_mi_exact(model: CovarianceModel, i: int, j: int) -> float:
    """I(W_i; W_j) = -0.5 * ln(1 - cov_ij^2) in nats."""
    L = model.length
    for idx in (i, j):
        if not 1 <= idx <= L:
            raise IndexOutOfRange(f"index {idx} outside 1..{L}")
    if i == j:
        raise IndexOutOfRange(f"need two distinct positions, got i = j = {i}")
    c = float(model.cov[i - 1, j - 1])
    return -0.5 * math.log1p(-c * c)


def conditional_law(model: CovarianceModel, i: int, prefix) -> ConditionalLaw:
    """Exact law of W_i given W_{1:i-1} = prefix.

    The Cholesky factor of the full covariance nests its leading-submatrix
    factors, so after the one cached O(L^3) factorization each position is a
    single forward substitution: evaluating all positions over one prefix
    costs O(L^3) total.
    """
    L = model.length
    if not 1 <= i <= L:
        raise IndexOutOfRange(f"position {i} outside 1..{L}")
    prefix = np.asarray(prefix, dtype=np.float64).reshape(-1)
    if len(prefix) != i - 1:
        raise PrefixLengthMismatch(f"prefix length {len(prefix)} != {i - 1}")
    factor = model.chol()
    k = i - 1
    std = float(factor[k, k])
    if k == 0:
        return ConditionalLaw(position=i, mean=0.0, std=std)
    u = solve_triangular(factor[:k, :k], prefix, lower=True, check_finite=False)
    mean = float(factor[k, :k] @ u)
    return ConditionalLaw(position=i, mean=mean, std=std)


def conditional_stds(model: CovarianceModel) -> np.ndarray:
    """Prefix-free conditional stds at every position (diagonal of the factor)."""
    return np.diag(model.chol()).copy()


def sample(model: CovarianceModel, n: int, seed: int) -> np.ndarray:
    """n i.i.d. rows from N(0, cov); deterministic given (seed, model)."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    white = rng.standard_normal((n, model.length))
    return white @ model.chol().T


def logdensity_terms(model: CovarianceModel, samples: np.ndarray) -> np.ndarray:
    """Per-position conditional log-densities log p(w_i | w_{<i}), shape (n, L)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    factor = model.chol()
    white = solve_triangular(factor, samples.T, lower=True, check_finite=False).T
    diag = np.diag(factor)
    return -0.5 * math.log(2.0 * math.pi) - np.log(diag)[None, :] - 0.5 * white**2


def mc_bipartite_mi(
    model: CovarianceModel, ell: int, n: int, seed: int
) -> tuple[float, float]:
    """Monte-Carlo bipartite MI via the chain-rule decomposition.

    Averages sum_i [log p(w_i | w_{<i}) - log p(w_i | w_{ell+1:i-1})] over
    i > ell on n fresh samples. Returns (estimate, stderr) with stderr the
    per-sample standard deviation over sqrt(n).
    """
    L = model.length
    if not 1 <= ell <= L - 1:
        raise SplitOutOfRange(f"ell must be in 1..{L - 1}, got {ell}")
    if n < 2:
        raise ValueError(f"need n >= 2 for a standard error, got {n}")
    factor = model.chol()
    rng = np.random.default_rng(seed)
    white = rng.standard_normal((n, L))
    draws = white @ factor.T
    # draws = factor @ white by construction, so `white` is already the
    # whitened sample; only the Y-marginal pass needs a triangular solve.
    cond_logdet = float(np.sum(np.log(np.diag(factor)[ell:])))
    cond_lp = -cond_logdet - 0.5 * np.sum(white[:, ell:] ** 2, axis=1)

    y_factor = _checked_cholesky(model.cov[ell:, ell:])
    y_white = solve_triangular(y_factor, draws[:, ell:].T, lower=True, check_finite=False)
    marg_logdet = float(np.sum(np.log(np.diag(y_factor))))
    marg_lp = -marg_logdet - 0.5 * np.sum(y_white**2, axis=0)

    contribs = cond_lp - marg_lp
    estimate = float(np.mean(contribs))
    stderr = float(np.std(contribs, ddof=1) / math.sqrt(n))
    return estimate, stderr


def gaussian_kl(mu_p, sigma_p, mu_q, sigma_q):
    """KL(N(mu_p, sigma_p^2) || N(mu_q, sigma_q^2)) in nats; broadcasts."""
    mu_p, sigma_p = np.asarray(mu_p, dtype=float), np.asarray(sigma_p, dtype=float)
    mu_q, sigma_q = np.asarray(mu_q, dtype=float), np.asarray(sigma_q, dtype=float)
    if np.any(sigma_q <= 0) or np.any(sigma_p <= 0):
        raise NonPositiveStd("standard deviations must be > 0")
    var_ratio = (sigma_p / sigma_q) ** 2
    shift = ((mu_p - mu_q) / sigma_q) ** 2
    return np.log(sigma_q / sigma_p) + 0.5 * (var_ratio + shift) - 0.5


def conditional_kl(
    p_model: CovarianceModel,
    q_means,
    q_stds,
    sample_prefixes,
    position: int,
) -> float:
    """Average over samples of KL(p(. | prefix) || q) at one position.

    q is described by per-position mean/std vectors (its conditionals do not
    depend on the prefix); p's conditional mean varies per sample but its
    std does not, so the average only touches the mean-shift term.
    """
    L = p_model.length
    if not 1 <= position <= L:
        raise IndexOutOfRange(f"position {position} outside 1..{L}")
    q_means = np.asarray(q_means, dtype=np.float64).reshape(-1)
    q_stds = np.asarray(q_stds, dtype=np.float64).reshape(-1)
    if len(q_means) < position or len(q_stds) < position:
        raise PrefixLengthMismatch("q mean/std vectors shorter than position")
    sigma_q = float(q_stds[position - 1])
    if sigma_q <= 0:
        raise NonPositiveStd(f"q std at position {position} is {sigma_q}")
    mu_q = float(q_means[position - 1])

    k = position - 1
    factor = p_model.chol()
    sigma_p = float(factor[k, k])
    prefixes = np.atleast_2d(np.asarray(sample_prefixes, dtype=np.float64))
    if k == 0:
        mu_p = np.zeros(prefixes.shape[0] if prefixes.size else 1)
    else:
        if prefixes.shape[1] < k:
            raise PrefixLengthMismatch(
                f"prefixes have {prefixes.shape[1]} columns, need >= {k}"
            )
        u = solve_triangular(
            factor[:k, :k], prefixes[:, :k].T, lower=True, check_finite=False
        )
        mu_p = factor[k, :k] @ u
    value = float(np.mean(gaussian_kl(mu_p, sigma_p, mu_q, sigma_q)))
    return 0.0 if -1e-12 < value < 0.0 else value


def sweep_bipartite(
    family: str,
    max_layers: int,
    ratio: float = 0.5,
    gamma: float = DEFAULT_GAMMA,
    rho: float = DEFAULT_RHO,
    cap: int = DEFAULT_LAYER_CAP,
    min_layers: int = 1,
) -> list[tuple[int, float]]:
    """Exact (L, bipartite MI) series over l = min_layers..max_layers.

    The split sits at ell = clamp(round(ratio * L), 1, L-1) for each layer.
    """
    if not 0.0 < ratio < 1.0:
        raise SplitOutOfRange(f"ratio must be in (0, 1), got {ratio}")
    out = []
    for layers in range(min_layers, max_layers + 1):
        model = build_covariance(family, layers, gamma=gamma, rho=rho, cap=cap)
        L = model.length
        ell = min(max(int(round(ratio * L)), 1), L - 1)
        out.append((L, bipartite_mi_exact(model, ell)))
    return out


# --------------------------------------------------------- GCOV file format ---

_GCOV_MAGIC = b"GCOV"
_GCOV_VERSION = 1
_FAMILY_CODE = {"subvolume": 0, "logfamily": 1}
_FAMILY_NAME = {0: "subvolume", 1: "logfamily"}


def write_model(model: CovarianceModel, path: str | Path) -> None:
    """Serialize: magic, version u16, family u8, layers u8, gamma f64,
    rho f64, then the lower triangle row-major as little-endian f64."""
    if model.family not in _FAMILY_CODE:
        raise ValueError(f"cannot serialize family {model.family!r}")
    tri = model.cov[np.tril_indices(model.length)]
    with open(path, "wb") as f:
        f.write(_GCOV_MAGIC)
        f.write(struct.pack("<HBB", _GCOV_VERSION, _FAMILY_CODE[model.family], model.layers))
        f.write(struct.pack("<dd", model.gamma, model.rho))
        f.write(tri.astype("<f8").tobytes())


def read_model(path: str | Path) -> CovarianceModel:
    with open(path, "rb") as f:
        if f.read(4) != _GCOV_MAGIC:
            raise ValueError(f"{path}: bad magic, expected GCOV")
        version, family_code, layers = struct.unpack("<HBB", f.read(4))
        if version != _GCOV_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        if family_code not in _FAMILY_NAME:
            raise ValueError(f"{path}: unknown family code {family_code}")
        gamma, rho = struct.unpack("<dd", f.read(16))
        L = 4**layers
        n_tri = L * (L + 1) // 2
        raw = f.read(8 * n_tri)
        if len(raw) != 8 * n_tri:
            raise ValueError(f"{path}: truncated triangle block")
    tri = np.frombuffer(raw, dtype="<f8")
    cov = np.zeros((L, L))
    cov[np.tril_indices(L)] = tri
    cov = cov + np.tril(cov, -1).T
    return CovarianceModel(
        family=_FAMILY_NAME[family_code], layers=layers, gamma=gamma, rho=rho, cov=cov
    )
