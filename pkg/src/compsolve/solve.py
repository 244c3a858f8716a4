"""Successive approximation against a surrogate, its fixed-point form and a re-anchored variant.

With y_hat = y - f(x_start) and y_0 = y_hat, each step solves

    f0(x_m) = f0(x_{m-1}) + y_{m-1}
    y_m     = y_{m-1} - (f(x_m) - f(x_{m-1}))

so that y_hat - y_m = f(x_m) - f(x_start) telescopes and |y_m| is the residual.
"""
from __future__ import annotations

import enum
import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .operators import (Decomposition, IdentitySurrogate, Mapping, SingularJacobian,
                        Surrogate, SurrogateSolveFailed)


class Outcome(str, enum.Enum):
    CONVERGED = "Converged"
    NON_CONTRACTIVE = "NonContractive"
    LEFT_BALL = "LeftBall"
    MAX_ITER = "MaxIter"
    SURROGATE_FAILURE = "SurrogateFailure"
    PATCH_STALL = "PatchStall"


class TargetOutsideRadius(ValueError):
    """The radius guard refused a target farther than (1 - sigma) r from f(x_start)."""


@dataclass(frozen=True)
class SolveConfig:
    tol: float = 1e-10
    max_iter: int = 200
    radius_guard: bool = False
    sigma_hint: float | None = None
    m0_hint: int | None = None
    # consecutive windows of residual growth before declaring divergence
    divergence_windows: int = 3

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class IterRecord:
    m: int
    res_norm: float
    df0_norm: float
    step_norm: float


@dataclass
class SolveTrace:
    outcome: Outcome
    x: np.ndarray
    residual: float
    records: list[IterRecord] = field(default_factory=list)
    y_hat_norm: float = 0.0
    telescoping_error: float = 0.0
    reanchors: int = 0
    detail: str = ""

    @property
    def converged(self) -> bool:
        return self.outcome is Outcome.CONVERGED

    @property
    def iterations(self) -> int:
        return self.records[-1].m if self.records else 0

    def summary(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "iterations": self.iterations,
            "residual": float(self.residual),
            "y_hat_norm": float(self.y_hat_norm),
            "telescoping_error": float(self.telescoping_error),
            "reanchors": self.reanchors,
            "detail": self.detail,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("m,res_norm,df0_norm,step_norm\n")
        for r in self.records:
            buf.write(f"{r.m},{r.res_norm!r},{r.df0_norm!r},{r.step_norm!r}\n")
        buf.write(json.dumps(self.summary(), sort_keys=True) + "\n")
        return buf.getvalue()


def _guard(d: Decomposition, y_hat_norm: float, cfg: SolveConfig, sampler_seed: int = 0):
    sigma = cfg.sigma_hint
    if sigma is None:
        from .certify import Contraction, SamplerConfig, estimate_contraction

        c = estimate_contraction(d, SamplerConfig(rng_seed=sampler_seed))
        if not isinstance(c, Contraction):
            raise TargetOutsideRadius("radius guard: surrogate comparison is not contractive")
        sigma = c.sigma
    limit = 0.99 * (1.0 - sigma) * d.f.radius
    if y_hat_norm > limit:
        raise TargetOutsideRadius(
            f"|y - f(x_start)| = {y_hat_norm:.6g} exceeds 0.99 (1 - sigma) r = {limit:.6g}")


def solve_comparison(d: Decomposition, y_target, x_start, cfg: SolveConfig = SolveConfig(),
                     *, patch: tuple[np.ndarray, float] | None = None) -> SolveTrace:
    """Run the successive-approximation recurrence from x_start towards f(x) = y_target.

    ``patch`` (center, radius) restricts iterates to a sub-ball; leaving it
    ends the run with LEFT_BALL at the first iterate outside, which is how the
    re-anchored solver detects a patch boundary.
    """
    f, f0 = d.f, d.f0
    Y = d.codomain
    y_target = np.asarray(y_target, dtype=float)
    x = np.array(x_start, dtype=float)
    fx_start = f(x)
    y_hat = y_target - fx_start
    y_hat_norm = Y.norm(y_hat)
    if cfg.radius_guard:
        _guard(d, y_hat_norm, cfg)

    y = y_hat.copy()
    fx, f0x = fx_start, f0(x)
    scale = 1.0 + y_hat_norm
    trace = SolveTrace(Outcome.MAX_ITER, x, y_hat_norm, y_hat_norm=y_hat_norm)
    window = cfg.m0_hint or 1
    history = [y_hat_norm]
    growth = 0

    def finish(outcome, x_final, detail=""):
        trace.outcome, trace.x, trace.detail = outcome, x_final, detail
        if outcome is not Outcome.LEFT_BALL:
            trace.residual = Y.norm(f(x_final) - y_target)
        return trace

    if y_hat_norm <= cfg.tol:
        return finish(Outcome.CONVERGED, x)

    for m in range(1, cfg.max_iter + 1):
        try:
            x_new = f0.solve(f0x + y, x)
        except (SurrogateSolveFailed, SingularJacobian) as exc:
            return finish(Outcome.SURROGATE_FAILURE, x, f"m={m}: {exc}")
        if not np.all(np.isfinite(x_new)):
            return finish(Outcome.SURROGATE_FAILURE, x, f"m={m}: non-finite surrogate solution")
        outside = not f.contains(x_new)
        if patch is not None and not outside:
            outside = d.domain.norm(x_new - patch[0]) > patch[1]
        if outside:
            trace.residual = Y.norm(y)
            return finish(Outcome.LEFT_BALL, x_new, f"m={m}: iterate left the ball")

        fx_new, f0x_new = f(x_new), f0(x_new)
        y = y - (fx_new - fx)
        res = Y.norm(y)
        trace.records.append(IterRecord(m, res, Y.norm(f0x_new - f0x), d.domain.norm(x_new - x)))
        tele = Y.norm((y_hat - y) - (fx_new - fx_start))
        trace.telescoping_error = max(trace.telescoping_error, tele / scale)
        x, fx, f0x = x_new, fx_new, f0x_new
        history.append(res)

        if res <= cfg.tol:
            return finish(Outcome.CONVERGED, x)
        if len(history) > window and res > history[-1 - window]:
            growth += 1
            if growth >= cfg.divergence_windows:
                return finish(Outcome.NON_CONTRACTIVE, x,
                              f"residual grew over {growth} consecutive windows of {window}")
        else:
            growth = 0
    return finish(Outcome.MAX_ITER, x)


def solve_fixed_point(f1: Mapping, y, x_start, cfg: SolveConfig = SolveConfig()) -> SolveTrace:
    """Solve x - f1(x) = y with the identity as surrogate; y = 0 gives a fixed point of f1."""
    f = Mapping(f1.domain, f1.codomain, lambda x, g=f1.fn: x - g(x), f1.center, f1.radius,
                label=f"I - {f1.label}")
    return solve_comparison(Decomposition(f, IdentitySurrogate()), y, x_start, cfg)


def solve_patched(f: Mapping, surrogate_factory: Callable[[np.ndarray], Surrogate], y, x_start,
                  cfg: SolveConfig = SolveConfig(), reanchor_radius: float | None = None,
                  patch_iter: int = 25) -> SolveTrace:
    """Successive approximation with fresh surrogates built at re-anchoring points.

    Inside a patch B(anchor, reanchor_radius) the plain recurrence runs; when an
    iterate leaves the patch, the residual starts growing, or ``patch_iter``
    iterations pass without convergence, the run re-anchors (at the patch
    boundary in the first case, at the current iterate otherwise) and builds
    a new surrogate there.
    """
    if reanchor_radius is None:
        reanchor_radius = f.radius / 4.0
    X, Y = f.domain, f.codomain
    y = np.asarray(y, dtype=float)
    x = np.array(x_start, dtype=float)
    fx_start = f(x)
    y_hat_norm = Y.norm(y - fx_start)
    records: list[IterRecord] = []
    tele = 0.0
    used = 0
    reanchors = 0
    stalls = 0
    res_at_anchor = y_hat_norm

    def out(outcome, x_final, detail=""):
        t = SolveTrace(outcome, x_final, Y.norm(f(x_final) - y) if f.contains(x_final) else np.nan,
                       records, y_hat_norm, tele, reanchors, detail)
        return t

    while True:
        try:
            s = surrogate_factory(x)
        except (SurrogateSolveFailed, SingularJacobian) as exc:
            return out(Outcome.SURROGATE_FAILURE, x, f"re-anchor {reanchors}: {exc}")
        budget = cfg.max_iter - used
        if budget <= 0:
            return out(Outcome.MAX_ITER, x)
        inner_cfg = SolveConfig(cfg.tol, min(budget, patch_iter), False, cfg.sigma_hint,
                                cfg.m0_hint, cfg.divergence_windows)
        t = solve_comparison(Decomposition(f, s), y, x, inner_cfg, patch=(x.copy(), reanchor_radius))
        for r in t.records:
            records.append(IterRecord(used + r.m, r.res_norm, r.df0_norm, r.step_norm))
        # the telescoping identity is checked against this patch's own start
        tele = max(tele, t.telescoping_error)
        used += max(t.iterations, 1)
        if t.outcome is Outcome.CONVERGED:
            return out(Outcome.CONVERGED, t.x)
        if t.outcome is Outcome.SURROGATE_FAILURE:
            return out(t.outcome, t.x, t.detail)
        if used >= cfg.max_iter:
            return out(Outcome.MAX_ITER, t.x if f.contains(t.x) else x)

        anchor = x
        if t.outcome is Outcome.LEFT_BALL:
            step = t.x - anchor
            dist = X.norm(step)
            x_next = anchor + step * (reanchor_radius / dist) if dist > reanchor_radius else t.x
            if not f.contains(x_next):
                gd = f.distance(x_next)
                x_next = f.center + (x_next - f.center) * (f.radius / gd)
        else:
            x_next = t.x

        res_next = Y.norm(f(x_next) - y)
        if res_next <= cfg.tol:
            return out(Outcome.CONVERGED, x_next)
        if res_next > (1.0 - 1e-3) * res_at_anchor:
            stalls += 1
            if stalls >= 2:
                return out(Outcome.PATCH_STALL, x_next,
                           f"two re-anchors without residual decrease (residual {res_next:.3e})")
        else:
            stalls = 0
        reanchors += 1
        res_at_anchor = min(res_at_anchor, res_next)
        x = x_next
        if X.norm(x - anchor) == 0.0 and t.outcome is not Outcome.LEFT_BALL:
            return out(Outcome.PATCH_STALL, x, "re-anchor point did not move")
