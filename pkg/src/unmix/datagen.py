"""Simulation designs: error distributions, mixing, and Monte Carlo campaigns.

Three families of error models are provided, each with exact population
cumulants where they exist:

* independent coordinates drawn from a fixed menu of nine standardized
  univariate densities (heavy tails, skewness, bimodality, a flat one);
* Gaussian variance mixtures X = sqrt(V) Z with Z ~ N(0, Sigma) and an
  independent scalar mixer V -- dependent but uncorrelated coordinates whose
  even cumulants follow a closed pairing formula;
* two-component Gaussian location-zero mixtures, whose cumulants of order
  2l >= 4 follow the same pairing formula driven by Bernoulli cumulants;
* a signed-power transform of either, giving reflection-symmetric errors
  with no usable closed form.

All models generate standardized output (zero mean, identity or unit
diagonal covariance as documented per model), so a mixing matrix applied on
top is the only source of correlation.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import moments as moments_mod
from .estimator import EstimatorOptions, RestrictionSpec, estimate
from .metrics import amari_error, frobenius_error
from .tensors import SymmetricTensor, multilinear_apply, num_unique, unique_indices

__all__ = [
    "DENSITY_MENU",
    "menu_density",
    "sample_menu",
    "menu_cumulant",
    "MenuModel",
    "ScaleMixtureModel",
    "GaussianMixtureModel",
    "SignedPowerModel",
    "QuadraticDependenceModel",
    "population_cumulant_scale_mixture",
    "population_cumulant_gaussian_mixture",
    "ScenarioCell",
    "run_cell",
    "run_campaign",
    "default_mixing_matrix",
]

log = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# univariate menu


def _gaussian_raw_moment(mu: float, sigma: float, k: int) -> float:
    total = 0.0
    for j in range(0, k + 1, 2):
        total += (
            math.comb(k, j)
            * mu ** (k - j)
            * sigma**j
            * (math.prod(range(1, j, 2)) if j else 1.0)
        )
    return total


class _MixtureDensity:
    """Finite Gaussian mixture, affinely standardized to mean 0, variance 1."""

    def __init__(self, name: str, weights, means, sds):
        self.name = name
        self.w = np.asarray(weights, dtype=float)
        self.mu = np.asarray(means, dtype=float)
        self.sd = np.asarray(sds, dtype=float)
        if abs(self.w.sum() - 1.0) > 1e-12 or np.any(self.w <= 0):
            raise ValueError("mixture weights must be positive and sum to one")
        m = float(self.w @ self.mu)
        v = float(self.w @ (self.sd**2 + self.mu**2) - m**2)
        self._shift = m
        self._scale = math.sqrt(v)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        comp = rng.choice(len(self.w), size=n, p=self.w)
        x = rng.standard_normal(n) * self.sd[comp] + self.mu[comp]
        return (x - self._shift) / self._scale

    def raw_moment(self, k: int) -> float:
        return float(
            sum(
                w * _gaussian_raw_moment(m, s, k)
                for w, m, s in zip(self.w, self.mu, self.sd)
            )
        )

    def cumulant(self, l: int) -> float:
        # standardized: kappa_l((X - shift)/scale); build from raw moments
        mus = []
        for k in range(1, l + 1):
            # raw moments of the standardized variable by binomial shift
            total = 0.0
            for j in range(k + 1):
                total += (
                    math.comb(k, j)
                    * self.raw_moment(j)
                    * (-self._shift) ** (k - j)
                )
            mus.append(total / self._scale**k)
        fam = moments_mod.MomentFamily(
            [SymmetricTensor(1, p, [mus[p - 1]]) for p in range(1, l + 1)]
        )
        return float(moments_mod.cumulants_from_moments(fam).values[0])


class _StudentT:
    name = "student_t5"
    dof = 5

    def sample(self, rng, n):
        return rng.standard_t(self.dof, size=n) / math.sqrt(self.dof / (self.dof - 2))

    def cumulant(self, l):
        if l == 1 or l % 2 == 1:
            return 0.0 if l < self.dof else None
        if l == 2:
            return 1.0
        if l == 4:
            return 6.0 / (self.dof - 4)  # standardized excess kurtosis
        return None  # moment of that order does not exist for dof = 5


class _Uniform:
    name = "uniform"

    def sample(self, rng, n):
        return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=n)

    def cumulant(self, l):
        if l % 2 == 1:
            return 0.0
        # kappa_2k of U(0,1) is B_2k / 2k; standardized scale (2 sqrt 3)
        from fractions import Fraction

        bern = {2: Fraction(1, 6), 4: Fraction(-1, 30), 6: Fraction(1, 42)}
        if l not in bern:
            return None
        return float(bern[l] / l) * (2.0 * math.sqrt(3.0)) ** l


class _Laplace:
    name = "laplace"

    def sample(self, rng, n):
        return rng.laplace(scale=1.0 / math.sqrt(2.0), size=n)

    def cumulant(self, l):
        # kappa_2k = 2 (2k-1)! b^(2k) at scale b
        if l % 2 == 1:
            return 0.0
        return 2.0 * math.factorial(l - 1) * (1.0 / math.sqrt(2.0)) ** l


class _CenteredExponential:
    name = "exponential_centered"

    def sample(self, rng, n):
        return rng.exponential(1.0, size=n) - 1.0

    def cumulant(self, l):
        # Exp(1) has kappa_l = (l-1)!; centering only kills the first one
        return 0.0 if l == 1 else float(math.factorial(l - 1))


DENSITY_MENU = {
    1: _StudentT(),
    2: _MixtureDensity("skewed_mixture_a", [0.6, 0.4], [-1.0, 1.5], [0.6, 0.8]),
    3: _MixtureDensity("bimodal_separated_a", [0.5, 0.5], [-1.5, 1.5], [0.5, 0.5]),
    4: _MixtureDensity("bimodal_separated_b", [0.5, 0.5], [-1.2, 1.2], [0.3, 0.7]),
    5: _MixtureDensity("skewed_mixture_b", [0.75, 0.25], [-0.5, 1.5], [0.5, 1.0]),
    6: _Uniform(),
    7: _Laplace(),
    8: _CenteredExponential(),
    9: _MixtureDensity("bimodal_asymmetric", [0.45, 0.55], [-1.1, 0.9], [0.4, 0.7]),
}


def menu_density(density_id: int):
    try:
        return DENSITY_MENU[int(density_id)]
    except (KeyError, ValueError):
        raise ValueError(f"unknown density id {density_id!r}; valid ids are 1..9")


def sample_menu(rng: np.random.Generator, n: int, density_ids) -> np.ndarray:
    """Independent columns, one menu density per coordinate."""
    cols = [menu_density(i).sample(rng, n) for i in density_ids]
    return np.column_stack(cols)


def menu_cumulant(density_id: int, order: int):
    """Exact cumulant of a standardized menu density; None if it does not exist."""
    return menu_density(density_id).cumulant(order)


# ----------------------------------------------------------------------
# pairing formula shared by the structured models


def _pairing_sum(M: np.ndarray, idx: tuple[int, ...]) -> float:
    """Sum over perfect matchings of the index positions of products of M entries."""
    r = len(idx)
    if r % 2:
        return 0.0

    def rec(positions):
        if not positions:
            return 1.0
        first, rest = positions[0], positions[1:]
        total = 0.0
        for k, other in enumerate(rest):
            total += M[idx[first], idx[other]] * rec(rest[:k] + rest[k + 1:])
        return total

    return float(rec(tuple(range(r))))


def _mixer_cumulants_from_moments(raw_moments) -> list[float]:
    """Cumulants kappa_1..kappa_m of a scalar from its raw moments 1..m."""
    out = []
    for l in range(1, len(raw_moments) + 1):
        fam = moments_mod.MomentFamily(
            [SymmetricTensor(1, p, [raw_moments[p - 1]]) for p in range(1, l + 1)]
        )
        out.append(float(moments_mod.cumulants_from_moments(fam).values[0]))
    return out


def population_cumulant_scale_mixture(mixer_cumulants, Sigma, r: int) -> SymmetricTensor:
    """Exact order-r cumulant of X = sqrt(V) Z, Z ~ N(0, Sigma), V >= 0 scalar.

    For even r = 2l the entries are kappa_l(V) times the sum over perfect
    matchings of the index positions of products of Sigma entries; all odd
    orders vanish by the conditional symmetry of Z.  ``mixer_cumulants`` must
    provide kappa_1..kappa_{r/2} of V.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    d = Sigma.shape[0]
    if r % 2:
        return SymmetricTensor.zeros(d, r)
    l = r // 2
    if len(mixer_cumulants) < l:
        raise ValueError(f"need mixer cumulants up to order {l}")
    kl = float(mixer_cumulants[l - 1])
    vals = np.array([_pairing_sum(Sigma, idx) for idx in unique_indices(d, r)])
    return SymmetricTensor(d, r, kl * vals)


def population_cumulant_gaussian_mixture(gamma: float, Sigma1, Sigma2, r: int) -> SymmetricTensor:
    """Exact order-r cumulant of the mixture (1-gamma) N(0, Sigma1) + gamma N(0, Sigma2).

    Writing Delta = Sigma2 - Sigma1 and H ~ Bernoulli(gamma): order 2 is
    Sigma1 + gamma Delta; even orders 2l >= 4 are kappa_l(H) times the
    matching sum of Delta entries; odd orders vanish.
    """
    Sigma1 = np.asarray(Sigma1, dtype=float)
    Sigma2 = np.asarray(Sigma2, dtype=float)
    d = Sigma1.shape[0]
    if not 0.0 < gamma < 1.0:
        raise ValueError("mixture weight must lie strictly between 0 and 1")
    if r % 2:
        return SymmetricTensor.zeros(d, r)
    if r == 2:
        return SymmetricTensor.from_dense(Sigma1 + gamma * (Sigma2 - Sigma1))
    l = r // 2
    bern = _mixer_cumulants_from_moments([gamma] * l)
    Delta = Sigma2 - Sigma1
    vals = np.array([_pairing_sum(Delta, idx) for idx in unique_indices(d, r)])
    return SymmetricTensor(d, r, bern[l - 1] * vals)


# ----------------------------------------------------------------------
# error models


class ErrorModel:
    """Interface: sample(rng, n) -> (n, d) standardized errors."""

    d: int

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def population_cumulant(self, r: int):
        """Exact order-r cumulant tensor of the generated errors, or None."""
        return None

    def describe(self) -> str:
        raise NotImplementedError


@dataclass
class MenuModel(ErrorModel):
    """Independent coordinates from the univariate menu."""

    density_ids: tuple

    def __post_init__(self):
        self.density_ids = tuple(int(i) for i in self.density_ids)
        for i in self.density_ids:
            menu_density(i)
        self.d = len(self.density_ids)

    def sample(self, rng, n):
        return sample_menu(rng, n, self.density_ids)

    def population_cumulant(self, r):
        diag = [menu_cumulant(i, r) for i in self.density_ids]
        if any(c is None for c in diag):
            return None
        return SymmetricTensor.from_entries(
            self.d, r, {(j,) * r: diag[j] for j in range(self.d)}
        )

    def describe(self):
        names = ",".join(menu_density(i).name for i in self.density_ids)
        return f"menu({names})"


class _ExponentialMixer:
    """V ~ Exp(1): kappa_l = (l-1)!; the resulting X is Laplace-like."""

    tag = "exp"

    def __call__(self, rng, n):
        return rng.exponential(1.0, size=n)

    def cumulants(self):
        return [float(math.factorial(l - 1)) for l in range(1, 7)]


class _InverseGammaMixer:
    """V ~ InvGamma(nu/2, nu/2): X = sqrt(V) Z is multivariate Student-t(nu)."""

    def __init__(self, nu: float):
        if nu <= 2.0:
            raise ValueError("inverse-gamma mixer needs nu > 2 for a variance")
        self.nu = float(nu)
        self.tag = f"t{nu:g}"

    def __call__(self, rng, n):
        return (self.nu / 2.0) / rng.gamma(self.nu / 2.0, size=n)

    def cumulants(self):
        # E V^q = (nu/2)^q / prod_{j=1..q} (nu/2 - j), defined while nu > 2q
        nu = self.nu
        moms = []
        for q in range(1, 7):
            if nu <= 2 * q:
                break
            moms.append((nu / 2.0) ** q / math.prod(nu / 2.0 - j for j in range(1, q + 1)))
        return _mixer_cumulants_from_moments(moms)


def _mixer(kind: str, param: float):
    """Sampler object (picklable) and cumulant list for the variance mixer V."""
    if kind == "exponential":
        m = _ExponentialMixer()
    elif kind == "inverse_gamma":
        m = _InverseGammaMixer(param)
    else:
        raise ValueError(f"unknown mixer kind {kind!r}")
    return m, m.cumulants(), m.tag


@dataclass
class ScaleMixtureModel(ErrorModel):
    """X = sqrt(V) Z with Z ~ N(0, Sigma), standardized to unit variances.

    Coordinates are uncorrelated iff Sigma is diagonal, in which case the
    model is invariant under coordinate sign flips but the coordinates are
    dependent through the shared mixer.
    """

    mixer: str
    Sigma: np.ndarray
    param: float = 0.0

    def __post_init__(self):
        self.Sigma = np.asarray(self.Sigma, dtype=float)
        self.d = self.Sigma.shape[0]
        self._draw, self._mixer_cums, self._tag = _mixer(self.mixer, self.param)
        ev = self._mixer_cums[0]
        self._denom = np.sqrt(ev * np.diag(self.Sigma))
        self._chol = np.linalg.cholesky(self.Sigma)

    def sample(self, rng, n):
        z = rng.standard_normal((n, self.d)) @ self._chol.T
        v = self._draw(rng, n)
        return np.sqrt(v)[:, None] * z / self._denom

    def population_cumulant(self, r):
        if r % 2 == 1:
            return SymmetricTensor.zeros(self.d, r)
        if r // 2 > len(self._mixer_cums):
            return None
        raw = population_cumulant_scale_mixture(self._mixer_cums, self.Sigma, r)
        return multilinear_apply(np.diag(1.0 / self._denom), raw)

    def describe(self):
        return f"scale_mixture({self._tag}, d={self.d})"


@dataclass
class GaussianMixtureModel(ErrorModel):
    """Two-component zero-mean Gaussian mixture, whitened to identity covariance."""

    gamma: float
    Sigma1: np.ndarray
    Sigma2: np.ndarray

    def __post_init__(self):
        self.Sigma1 = np.asarray(self.Sigma1, dtype=float)
        self.Sigma2 = np.asarray(self.Sigma2, dtype=float)
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("mixture weight must lie strictly between 0 and 1")
        self.d = self.Sigma1.shape[0]
        cov = (1.0 - self.gamma) * self.Sigma1 + self.gamma * self.Sigma2
        w, V = np.linalg.eigh(cov)
        if np.min(w) <= 0:
            raise ValueError("mixture covariance must be positive definite")
        self._whiten = V @ np.diag(w**-0.5) @ V.T
        self._chol1 = np.linalg.cholesky(self.Sigma1)
        self._chol2 = np.linalg.cholesky(self.Sigma2)

    def sample(self, rng, n):
        z = rng.standard_normal((n, self.d))
        pick = rng.random(n) < self.gamma
        x = np.where(pick[:, None], z @ self._chol2.T, z @ self._chol1.T)
        return x @ self._whiten.T

    def population_cumulant(self, r):
        raw = population_cumulant_gaussian_mixture(self.gamma, self.Sigma1, self.Sigma2, r)
        return multilinear_apply(self._whiten, raw)

    def describe(self):
        return f"gaussian_mixture(gamma={self.gamma:g}, d={self.d})"


@dataclass
class SignedPowerModel(ErrorModel):
    """Coordinatewise signed power sign(x) |x|^q of a base model's output.

    Keeps every coordinate-reflection symmetry of the base model but has no
    closed-form cumulants; used for robustness designs.  The output is
    rescaled to unit variances when the base is one of the analytic models
    with symmetric coordinates (Gaussian scale mixture or plain normal).
    """

    base: ErrorModel
    q: float = 1.0 / 3.0

    def __post_init__(self):
        self.d = self.base.d
        self._scale = None
        if isinstance(self.base, ScaleMixtureModel):
            # E|X_j|^2q = E[V^q] E|N(0,1)|^[2q] per coordinate (unit variance base)
            ev_q = self._mixer_fractional_moment(self.base, self.q)
            abs_z = 2.0**self.q * math.gamma(self.q + 0.5) / math.sqrt(math.pi)
            self._scale = math.sqrt(ev_q * abs_z)

    @staticmethod
    def _mixer_fractional_moment(model: ScaleMixtureModel, q: float) -> float:
        # fractional moment of the standardized mixer V / E[V]
        ev = model._mixer_cums[0]
        if model.mixer == "exponential":
            return math.gamma(1.0 + q) / ev**q
        nu = model.param
        # InvGamma(nu/2, nu/2): E V^q = (nu/2)^q Gamma(nu/2 - q) / Gamma(nu/2)
        raw = (nu / 2.0) ** q * math.gamma(nu / 2.0 - q) / math.gamma(nu / 2.0)
        return raw / ev**q

    def sample(self, rng, n):
        x = self.base.sample(rng, n)
        y = np.sign(x) * np.abs(x) ** self.q
        if self._scale is not None:
            y = y / self._scale
        return y

    def describe(self):
        return f"signed_power(q={self.q:g}, base={self.base.describe()})"


@dataclass
class QuadraticDependenceModel(ErrorModel):
    """Two mean-independent but dependent errors: e1 = Z, e2 = a (Z^2 - 1) + b W.

    Z, W are independent standard normals and b is chosen so both
    coordinates have unit variance (needs a^2 <= 1/2).  The cross-cumulant
    kappa[1,1,2] equals 2a, so mean independence of e2 given e1 fails, while
    kappa[1,2,2] = 0 holds; this separates nested third-order patterns.
    """

    alpha: float = 0.5

    def __post_init__(self):
        if not abs(self.alpha) <= math.sqrt(0.5):
            raise ValueError("alpha^2 must be at most 1/2")
        self.d = 2
        self._beta = math.sqrt(1.0 - 2.0 * self.alpha**2)

    def sample(self, rng, n):
        z = rng.standard_normal(n)
        w = rng.standard_normal(n)
        e2 = self.alpha * (z**2 - 1.0) + self._beta * w
        return np.column_stack([z, e2])

    def population_cumulant(self, r):
        a = self.alpha
        if r == 2:
            return SymmetricTensor.from_dense(np.eye(2))
        if r == 3:
            return SymmetricTensor.from_entries(
                2, 3, {(0, 0, 1): 2.0 * a, (1, 1, 1): 8.0 * a**3}
            )
        return None

    def describe(self):
        return f"quadratic_dependence(alpha={self.alpha:g})"


MODEL_KINDS = {
    "menu": MenuModel,
    "scale_mixture": ScaleMixtureModel,
    "gaussian_mixture": GaussianMixtureModel,
    "signed_power": SignedPowerModel,
    "quadratic_dependence": QuadraticDependenceModel,
}


def model_from_config(cfg: dict) -> ErrorModel:
    """Build an error model from a JSON-style dict with a 'kind' field."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind == "menu":
        return MenuModel(density_ids=tuple(cfg.pop("density_ids")))
    if kind == "scale_mixture":
        return ScaleMixtureModel(
            mixer=cfg.pop("mixer"), Sigma=np.asarray(cfg.pop("Sigma"), dtype=float),
            param=float(cfg.pop("param", 0.0)),
        )
    if kind == "gaussian_mixture":
        return GaussianMixtureModel(
            gamma=float(cfg.pop("gamma")),
            Sigma1=np.asarray(cfg.pop("Sigma1"), dtype=float),
            Sigma2=np.asarray(cfg.pop("Sigma2"), dtype=float),
        )
    if kind == "signed_power":
        return SignedPowerModel(base=model_from_config(cfg.pop("base")),
                                q=float(cfg.pop("q", 1.0 / 3.0)))
    if kind == "quadratic_dependence":
        return QuadraticDependenceModel(alpha=float(cfg.pop("alpha", 0.5)))
    raise ValueError(f"unknown model kind {kind!r}; choose from {sorted(MODEL_KINDS)}")


def default_mixing_matrix(d: int) -> np.ndarray:
    """A fixed, well-conditioned, clearly non-orthogonal mixing matrix."""
    A = np.eye(d)
    for i in range(d):
        for j in range(d):
            if i < j:
                A[i, j] = 0.6 / (1 + j - i)
            elif i > j:
                A[i, j] = -0.4 / (1 + i - j)
    return A


# ----------------------------------------------------------------------
# Monte Carlo campaign


@dataclass
class ScenarioCell:
    """One Monte Carlo cell: a model, a mixing matrix, and an estimation recipe."""

    name: str
    model: ErrorModel
    spec: RestrictionSpec
    n: int
    replicates: int
    A0: np.ndarray = None
    opts: EstimatorOptions = field(default_factory=lambda: EstimatorOptions(
        weighting="efficient", n_starts=6))
    seed: int = 0

    def __post_init__(self):
        if self.A0 is None:
            self.A0 = default_mixing_matrix(self.model.d)
        self.A0 = np.asarray(self.A0, dtype=float)
        if self.A0.shape != (self.model.d, self.model.d):
            raise ValueError("A0 shape does not match the model dimension")
        if self.spec.d != self.model.d:
            raise ValueError("restriction spec dimension does not match the model")


def _run_replicate(cell: ScenarioCell, rep: int) -> dict:
    rng = np.random.default_rng((cell.seed, rep))
    eps = cell.model.sample(rng, cell.n)
    # observations solve A0 y = eps
    Y = np.linalg.solve(cell.A0, eps.T).T
    try:
        est = estimate(Y, cell.spec, cell.opts)
    except (ValueError, np.linalg.LinAlgError) as exc:
        return {"ok": False, "error": str(exc)}
    first = est.stage1 if est.stage1 is not None else est
    out = {
        "ok": True,
        "dF_identity": frobenius_error(first.A_hat, cell.A0),
        "dA_identity": amari_error(first.A_hat, cell.A0),
        "converged": est.converged,
    }
    if est.stage1 is not None:
        out["dF_efficient"] = frobenius_error(est.A_hat, cell.A0)
        out["dA_efficient"] = amari_error(est.A_hat, cell.A0)
    return out


def _replicate_star(args):
    return _run_replicate(*args)


def run_cell(cell: ScenarioCell, n_jobs: int = None) -> dict:
    """Run all replicates of one cell; aggregates means and failure counts."""
    tasks = [(cell, rep) for rep in range(cell.replicates)]
    if n_jobs is not None and n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_replicate_star, tasks, chunksize=1))
    else:
        rows = [_run_replicate(cell, rep) for rep in range(cell.replicates)]
    ok = [r for r in rows if r["ok"]]
    out = {
        "cell": cell.name,
        "model": cell.model.describe(),
        "stat": cell.spec.stat,
        "order": cell.spec.r,
        "pattern": cell.spec.pattern.kind,
        "n": cell.n,
        "replicates": cell.replicates,
        "failures": len(rows) - len(ok),
        "weighting": cell.opts.weighting,
    }
    for key in ("dF_identity", "dA_identity", "dF_efficient", "dA_efficient"):
        vals = np.array([r[key] for r in ok if key in r])
        if vals.size:
            out[key] = float(vals.mean())
            out[key + "_se"] = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
            out["_samples_" + key] = vals.tolist()
    out["convergence_rate"] = float(np.mean([r["converged"] for r in ok])) if ok else 0.0
    return out


def run_campaign(cells, n_jobs: int = None) -> list[dict]:
    results = []
    for cell in cells:
        log.info("running cell %s (%d replicates)", cell.name, cell.replicates)
        results.append(run_cell(cell, n_jobs=n_jobs))
    return results
