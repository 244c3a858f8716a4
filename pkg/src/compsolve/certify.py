"""Sampling estimates of the structural constants that decide solvability on a ball.

Every hypothesis is stated over a continuum of points, so each estimate here
is statistical evidence on a seeded sample, never a proof. Reports list the
hypotheses that were only sampled in ``gaps``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .operators import Decomposition, Mapping, SurrogateSolveFailed, SingularJacobian

M_MAX = 16
N_BINS = 64
DEGENERATE_FRACTION = 0.10
# k1 below this is reported as "not bounded away from zero"
K1_FLOOR = 1e-2


class DegenerateDenominator(ValueError):
    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = witness


class AllPairsDegenerate(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    n_sphere: int = 256
    n_radii: int = 8
    n_pairs: int = 512
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("n_sphere", "n_radii", "n_pairs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def rng(self, stream: int) -> np.random.Generator:
        # one independent stream per estimator, so estimators do not perturb each other
        return np.random.default_rng([self.rng_seed, stream])


@dataclass
class Contraction:
    sigma: float
    m0: int
    envelope: np.ndarray  # rows (tau, k(tau)) on the log bins
    degenerate: int = 0


@dataclass
class NotContractive:
    ratios: np.ndarray  # best sup k^m(tau)/tau for m = 1..M_MAX
    envelope: np.ndarray
    degenerate: int = 0


@dataclass
class Member:
    margin: float


@dataclass
class NonMember:
    witness: np.ndarray
    slack: float


@dataclass
class Inconclusive:
    reason: str


@dataclass
class CertificateReport:
    mu_table: np.ndarray
    nu_table: np.ndarray
    k_comparison: float
    k1_local: float
    contraction: Contraction | NotContractive
    delta0: float
    r1_radius: float | None
    gaps: list[str] = field(default_factory=list)
    verdict: str = "INCONCLUSIVE"
    seed: int = 0
    counts: dict = field(default_factory=dict)

    @property
    def sigma(self) -> float | None:
        return self.contraction.sigma if isinstance(self.contraction, Contraction) else None

    @property
    def m0(self) -> int | None:
        return self.contraction.m0 if isinstance(self.contraction, Contraction) else None

    def to_dict(self) -> dict:
        return {
            "mu": [[float(t), float(v)] for t, v in self.mu_table],
            "nu": [[float(t), float(v)] for t, v in self.nu_table],
            "k": float(self.k_comparison),
            "k1": float(self.k1_local),
            "sigma": None if self.sigma is None else float(self.sigma),
            "m0": self.m0,
            "delta0": float(self.delta0),
            "r1": None if self.r1_radius is None else float(self.r1_radius),
            "verdict": self.verdict,
            "gaps": list(self.gaps),
            "seed": int(self.seed),
        }

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), indent=2) + "\n"


def _finite(obj):
    # JSON has no inf/nan; map them to null
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, list):
        return [_finite(o) for o in obj]
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    return obj


# -- sampling ----------------------------------------------------------------

def sphere_directions(space, n: int, rng: np.random.Generator) -> np.ndarray:
    """n directions of unit norm in ``space`` (Gaussian, normalized)."""
    out = np.empty((n, space.dim))
    i = 0
    while i < n:
        g = rng.standard_normal(space.dim)
        nv = space.norm(g)
        if nv > 0:
            out[i] = g / nv
            i += 1
    return out


def _radii(f: Mapping, cfg: SamplerConfig) -> np.ndarray:
    return f.radius * np.arange(1, cfg.n_radii + 1) / cfg.n_radii


def _ball_pairs(f: Mapping, cfg: SamplerConfig, rng: np.random.Generator):
    """Pairs in the ball: x1 uniform-in-radius, x2 = x1 + s d with log-uniform s."""
    space, r = f.domain, f.radius
    d1 = sphere_directions(space, cfg.n_pairs, rng)
    d2 = sphere_directions(space, cfg.n_pairs, rng)
    t1 = r * rng.random(cfg.n_pairs)
    s = r * 10.0 ** rng.uniform(-4.0, np.log10(2.0), cfg.n_pairs)
    pairs = []
    for k in range(cfg.n_pairs):
        x1 = f.center + t1[k] * d1[k]
        x2 = x1 + s[k] * d2[k]
        dist = space.norm(x2 - f.center)
        if dist > r:
            x2 = f.center + (x2 - f.center) * (r / dist)
        pairs.append((x1, x2))
    return pairs


# -- estimators --------------------------------------------------------------

def estimate_growth_mu(d: Decomposition, cfg: SamplerConfig) -> np.ndarray:
    """Upper envelope of |f(x) - f(x0)| over sampled radius levels, made nondecreasing."""
    f = d.f
    rng = cfg.rng(1)
    dirs = sphere_directions(f.domain, cfg.n_sphere, rng)
    fx0 = f(f.center)
    rows = []
    for t in _radii(f, cfg):
        vals = [f.codomain.norm(f(f.center + t * u) - fx0) for u in dirs]
        rows.append((t, max(vals)))
    table = np.array(rows)
    table[:, 1] = np.maximum.accumulate(table[:, 1])
    return table


def _nu_samples(d: Decomposition, cfg: SamplerConfig):
    f, f0 = d.f, d.f0
    rng = cfg.rng(2)
    dirs = sphere_directions(f.domain, cfg.n_sphere, rng)
    f0x0 = f0(f.center)
    for t in _radii(f, cfg):
        for u in dirs:
            x = f.center + t * u
            yield t, x, f.domain.pair(f0(x) - f0x0, x - f.center)


def estimate_coercivity_nu(d: Decomposition, cfg: SamplerConfig) -> tuple[np.ndarray, float]:
    """Per-radius minimum of <f0(x) - f0(x0), x - x0> / |x - x0|; delta0 is the value at r0."""
    mins: dict[float, float] = {}
    for t, _, val in _nu_samples(d, cfg):
        mins[t] = min(mins.get(t, np.inf), val / t)
    table = np.array(sorted(mins.items()))
    return table, float(table[-1, 1])


def estimate_comparison_k(d: Decomposition, cfg: SamplerConfig) -> float:
    """inf of <f(x) - f(x0), x - x0> / <f0(x) - f0(x0), x - x0> over the ball samples."""
    f = d.f
    fx0 = f(f.center)
    k = np.inf
    for _, x, den in _nu_samples(d, cfg):
        if den <= 0.0:
            raise DegenerateDenominator(f"<f0(x), x - x0> = {den:.3e} <= 0", x)
        k = min(k, f.domain.pair(f(x) - fx0, x - f.center) / den)
    return float(k)


def _pair_increments(d: Decomposition, cfg: SamplerConfig, stream: int):
    f, f0, Y = d.f, d.f0, d.codomain
    rng = cfg.rng(stream)
    taus, errs, fnorms = [], [], []
    for x1, x2 in _ball_pairs(f, cfg, rng):
        df = f(x1) - f(x2)
        df0 = f0(x1) - f0(x2)
        taus.append(Y.norm(df0))
        errs.append(Y.norm(df - df0))
        fnorms.append(Y.norm(df))
    return np.array(taus), np.array(errs), np.array(fnorms)


def _degenerate_mask(taus: np.ndarray) -> np.ndarray:
    scale = taus.max(initial=0.0)
    return taus <= 1e-13 * max(scale, 1e-300)


class _StepEnvelope:
    """k(tau) = sup{e_i : tau_i <= tau}, extended linearly below the smallest sample."""

    def __init__(self, taus, errs):
        order = np.argsort(taus, kind="stable")
        self.taus = taus[order]
        self.vals = np.maximum.accumulate(errs[order])
        self.slope0 = self.vals[0] / self.taus[0]

    def __call__(self, tau: np.ndarray) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        idx = np.searchsorted(self.taus, tau, side="right") - 1
        out = np.where(idx >= 0, self.vals[np.clip(idx, 0, None)], self.slope0 * tau)
        # beyond the sampled range the envelope is not known; hold it proportional
        top = self.taus[-1]
        return np.where(tau > top, self.vals[-1] * tau / top, out)

    def binned(self, n_bins: int = N_BINS) -> np.ndarray:
        lo, hi = self.taus[0], self.taus[-1]
        edges = np.geomspace(lo, hi, n_bins) if hi > lo else np.array([hi])
        return np.column_stack([edges, self(edges)])


def estimate_contraction(d: Decomposition, cfg: SamplerConfig) -> Contraction | NotContractive:
    """Least m0 <= 16 with k^m0(tau) <= sigma tau, sigma < 1, over the sampled range.

    The step envelope only jumps at sampled tau values and so does every
    iterate of it; the sup of k^m(tau)/tau is therefore attained at those nodes.
    """
    taus, errs, _ = _pair_increments(d, cfg, stream=3)
    bad = _degenerate_mask(taus)
    n_bad = int(bad.sum())
    taus, errs = taus[~bad], errs[~bad]
    if taus.size == 0 or np.all(errs == 0.0):
        env = np.zeros((1, 2)) if taus.size == 0 else np.column_stack([taus[:1], [0.0]])
        return Contraction(0.0, 1, env, n_bad)
    k = _StepEnvelope(taus, errs)
    nodes = k.taus
    vals = nodes.copy()
    ratios = []
    for m in range(1, M_MAX + 1):
        vals = k(vals)
        ratio = float(np.max(vals / nodes))
        ratios.append(ratio)
        if ratio < 1.0:
            return Contraction(ratio, m, k.binned(), n_bad)
    return NotContractive(np.array(ratios), k.binned(), n_bad)


def estimate_local_stability_k1(d: Decomposition, cfg: SamplerConfig) -> tuple[float, int]:
    """inf |f(x1) - f(x2)| / |f0(x1) - f0(x2)| over sampled pairs; returns (k1, n_skipped)."""
    taus, _, fnorms = _pair_increments(d, cfg, stream=4)
    bad = _degenerate_mask(taus)
    if bad.all():
        raise AllPairsDegenerate("every sampled pair has f0(x1) = f0(x2)")
    return float(np.min(fnorms[~bad] / taus[~bad])), int(bad.sum())


def _g_map(f: Mapping, x: np.ndarray) -> np.ndarray:
    """g(x) = J(x - x0) / r0: the dual-ball parametrization of the sphere."""
    return f.domain.duality_map(x - f.center) / f.radius


def solvable_set_membership(d: Decomposition, y, cfg: SamplerConfig,
                            rel_tol: float = 1e-12) -> Member | NonMember | Inconclusive:
    """Check <y - f(x0), g(x)> <= <f(x) - f(x0), g(x)> on sampled x of the sphere S_r0(x0)."""
    f = d.f
    y = np.asarray(y, dtype=float)
    rng = cfg.rng(5)
    dirs = sphere_directions(f.domain, cfg.n_sphere, rng)
    fx0 = f(f.center)
    best, witness, scale = np.inf, None, 0.0
    for u in dirs:
        x = f.center + f.radius * u
        gx = _g_map(f, x)
        lhs = f.domain.pair(y - fx0, gx)
        rhs = f.domain.pair(f(x) - fx0, gx)
        scale = max(scale, abs(lhs), abs(rhs))
        if rhs - lhs < best:
            best, witness = rhs - lhs, x
    tol = rel_tol * (1.0 + scale)
    if best > tol:
        return Member(float(best))
    if best < -tol:
        return NonMember(witness, float(best))
    return Inconclusive(f"boundary case: minimal slack {best:.3e} within tolerance {tol:.1e}")


def _surrogate_image_radius(d: Decomposition, cfg: SamplerConfig) -> float:
    """min |f0(x) - f0(x0)| over the sampled sphere: radius of the image ball around f0(x0)."""
    f, f0 = d.f, d.f0
    dirs = sphere_directions(f.domain, cfg.n_sphere, cfg.rng(6))
    f0x0 = f0(f.center)
    return float(min(d.codomain.norm(f0(f.center + f.radius * u) - f0x0) for u in dirs))


def _check_surrogate_solves(d: Decomposition, cfg: SamplerConfig, radius: float, n: int = 8) -> int:
    """Try f0(x) = z for z sampled in the codomain ball; returns the number of failures."""
    f0 = d.f0
    center = f0(d.f.center)
    dirs = sphere_directions(d.codomain, n, cfg.rng(7))
    failures = 0
    for u in dirs:
        z = center + radius * u
        try:
            x = f0.solve(z, d.f.center)
        except (SurrogateSolveFailed, SingularJacobian):
            failures += 1
            continue
        if d.codomain.norm(f0(x) - z) > 1e-8 * (1.0 + d.codomain.norm(z)):
            failures += 1
    return failures


STANDARD_GAPS = (
    "growth, coercivity and comparison inequalities checked on sampled points only",
    "local stability (iii) for almost every point: sampled infimum only",
    "openness of f0 (condition i) not checkable; only sampled solves of f0(x) = z attempted",
    "compact-embedding corrections (psi, phi of the corollaries) not estimated",
)


def certify(d: Decomposition, cfg: SamplerConfig) -> CertificateReport:
    """Run every estimator and assemble a report with a PASS/FAIL/INCONCLUSIVE verdict."""
    gaps = list(STANDARD_GAPS)
    fail, inconclusive = [], []

    mu = estimate_growth_mu(d, cfg)
    nu, delta0 = estimate_coercivity_nu(d, cfg)
    if not delta0 > 0:
        fail.append(f"coercivity: nu(r0) = {delta0:.3e} is not positive")

    try:
        k = estimate_comparison_k(d, cfg)
        if not k > 0:
            fail.append(f"comparison constant k = {k:.3e} is not positive")
    except DegenerateDenominator as exc:
        k = float("nan")
        fail.append(f"comparison: {exc} at witness {np.array2string(exc.witness, precision=4)}")

    contraction = estimate_contraction(d, cfg)
    n_pairs = cfg.n_pairs
    if isinstance(contraction, NotContractive):
        fail.append(f"no m0 <= {M_MAX} with k^m0(tau) <= sigma tau, sigma < 1")
    if contraction.degenerate > DEGENERATE_FRACTION * n_pairs:
        inconclusive.append(f"{contraction.degenerate}/{n_pairs} degenerate pairs with f0(x1) = f0(x2)")

    try:
        k1, skipped = estimate_local_stability_k1(d, cfg)
        if skipped > DEGENERATE_FRACTION * n_pairs:
            inconclusive.append(f"{skipped}/{n_pairs} degenerate pairs in the k1 estimate")
        if not k1 > K1_FLOOR:
            fail.append(f"local stability k1 = {k1:.3e} not bounded away from zero")
    except AllPairsDegenerate as exc:
        k1 = float("nan")
        inconclusive.append(str(exc))

    r1 = None
    if isinstance(contraction, Contraction):
        r_image = _surrogate_image_radius(d, cfg)
        r1 = 0.99 * (1.0 - contraction.sigma) * min(d.f.radius, r_image)
        failures = _check_surrogate_solves(d, cfg, r1)
        if failures:
            fail.append(f"surrogate solve failed for {failures}/8 sampled right-hand sides")

    gaps.extend(fail)
    gaps.extend(inconclusive)
    verdict = "FAIL" if fail else ("INCONCLUSIVE" if inconclusive else "PASS")
    return CertificateReport(mu, nu, k, k1, contraction, delta0, r1, gaps, verdict, cfg.rng_seed,
                             {"pairs": n_pairs, "sphere": cfg.n_sphere, "radii": cfg.n_radii,
                              "degenerate": contraction.degenerate})
