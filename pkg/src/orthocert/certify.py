"""Certification loops: pure sampling, uniform expansion, gradient-guided expansion.

All three draw the same weight sequence for a given seed (draw i comes from
its own substream keyed by (seed, i)), so certificates from different
methods are directly comparable.  Every box kept by any method was verified
safe by the configured verifier, and the reported ``p_safe`` is a sound
lower bound on the posterior mass of the safe-weight set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import mass as massmod
from .bounds import SAFE, VerifierConfig, verify_box
from .gradient import expansion_vectors, grad_margin, partition_dims
from .network import (Certificate, DrawRecord, NetworkDef, PosteriorParams,
                      RobustnessSpec, WeightBox, forward, sample_weights)

__all__ = [
    "CertifyParams",
    "certify_pure_sampling",
    "certify_pie",
    "certify_gie",
    "run_budgeted_comparison",
    "expand_draw",
    "draw_rng",
]


@dataclass(frozen=True)
class CertifyParams:
    """Knobs shared by the certification loops.

    ``scale`` multiplies the posterior std to give the base box radius;
    ``grad_scale`` is the extra growth factor applied by the gradient-guided
    method to its favored dimensions (0 disables the guidance entirely).
    """

    samples: int = 10
    scale: float = 0.25
    grad_scale: float = 0.0
    max_verifier_calls: int = 1000
    max_expand_iters: int = 64
    seed: int = 0
    ie_cap: int = massmod.DEFAULT_IE_CAP
    mc_samples: int = 1_000_000
    disjoint: bool = False

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.grad_scale < 0:
            raise ValueError("grad_scale must be non-negative")
        if self.max_verifier_calls < 1 or self.max_expand_iters < 1:
            raise ValueError("budgets must be positive")

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "scale": self.scale,
            "grad_scale": self.grad_scale,
            "max_verifier_calls": self.max_verifier_calls,
            "max_expand_iters": self.max_expand_iters,
            "seed": self.seed,
            "ie_cap": self.ie_cap,
            "mc_samples": self.mc_samples,
            "disjoint": self.disjoint,
        }


def draw_rng(seed: int, index: int) -> np.random.Generator:
    """Independent substream for one draw; identical across methods and workers."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def expand_draw(net: NetworkDef, spec: RobustnessSpec, cfg: VerifierConfig,
                w: np.ndarray, v_minus: np.ndarray, v_plus: np.ndarray,
                budget_left: int, max_iters: int) -> tuple[Optional[WeightBox], int, int, bool]:
    """Grow [w - j*v_minus, w + j*v_plus] for j = 1, 2, ... while it verifies.

    Returns (last verified box or None, successful iterations, calls used,
    whether the budget cut the loop short).
    """
    kept: Optional[WeightBox] = None
    j = 0
    used = 0
    while j < max_iters:
        if used >= budget_left:
            return kept, j, used, True
        cand = WeightBox(w - (j + 1) * v_minus, w + (j + 1) * v_plus)
        used += 1
        if verify_box(net, cand, spec, cfg) != SAFE:
            break
        kept = cand
        j += 1
    return kept, j, used, False


def _mass_of_union(posterior: PosteriorParams, boxes, params: CertifyParams):
    """Sound union mass plus an optional MC cross-estimate above the exact cap."""
    if not boxes:
        return 0.0, "exact_ie", None, None
    try:
        res = massmod.union_mass_exact(posterior, boxes, cap=params.ie_cap)
        return res.value, res.method, None, None
    except massmod.UnionSizeError:
        sound = massmod.greedy_disjoint_mass(posterior, boxes)
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=params.seed, spawn_key=(0x6D63,)))
        mc = massmod.union_mass_mc(posterior, boxes, params.mc_samples, rng)
        return sound.value, sound.method, mc.value, mc.ci99_half


def _in_any(boxes, w) -> bool:
    return any(b.contains(w) for b in boxes)


def _run_method(method: str, net: NetworkDef, posterior: PosteriorParams,
                spec: RobustnessSpec, params: CertifyParams,
                cfg: VerifierConfig) -> Certificate:
    base_calls = cfg.calls
    boxes: list[WeightBox] = []
    draws: list[DrawRecord] = []
    iterations: list[int] = []
    truncated = False
    grad_time = 0.0
    verify_time = 0.0
    t_start = time.perf_counter()

    for i in range(params.samples):
        budget_left = params.max_verifier_calls - (cfg.calls - base_calls)
        if budget_left <= 0:
            truncated = True
            break
        w = sample_weights(posterior, draw_rng(params.seed, i))
        if params.disjoint and _in_any(boxes, w):
            iterations.append(0)
            continue

        if method == "gie":
            t0 = time.perf_counter()
            y = forward(net, w, spec.center)
            margins = [float(a @ y) - b for a, b in spec.halfspaces]
            binding = spec.halfspaces[int(np.argmin(margins))][0]
            part = partition_dims(grad_margin(net, w, spec.center, binding))
            grad_time += time.perf_counter() - t0
            vecs = expansion_vectors(posterior.std, params.scale, params.grad_scale, part)
            v_minus, v_plus = vecs.v_minus, vecs.v_plus
        else:
            v_minus = v_plus = params.scale * posterior.std

        t0 = time.perf_counter()
        max_iters = 1 if method == "sampling" else params.max_expand_iters
        box, j, _, cut = expand_draw(net, spec, cfg, w, v_minus, v_plus,
                                     budget_left, max_iters)
        verify_time += time.perf_counter() - t0
        truncated = truncated or cut
        iterations.append(j)
        if box is not None:
            boxes.append(box)
            draws.append(DrawRecord(index=i, center=w, v_minus=v_minus,
                                    v_plus=v_plus, j=j))

    p_safe, mass_method, mc_est, mc_ci = _mass_of_union(posterior, boxes, params)
    total = time.perf_counter() - t_start
    return Certificate(
        method=method,
        boxes=tuple(boxes),
        p_safe=p_safe,
        mass_method=mass_method,
        lbp_calls=cfg.calls - base_calls,
        iterations=tuple(iterations),
        draws=tuple(draws),
        budget_truncated=truncated,
        seed=params.seed,
        params=params.to_dict(),
        timings={"gradient": grad_time, "verify": verify_time, "total": total},
        mass_ci99=mc_ci,
        mass_mc_estimate=mc_est,
    )


def certify_pure_sampling(net: NetworkDef, posterior: PosteriorParams,
                          spec: RobustnessSpec, params: CertifyParams,
                          cfg: VerifierConfig) -> Certificate:
    """Fixed-size boxes [w +- scale*std], one verification per draw."""
    return _run_method("sampling", net, posterior, spec, params, cfg)


def certify_pie(net: NetworkDef, posterior: PosteriorParams,
                spec: RobustnessSpec, params: CertifyParams,
                cfg: VerifierConfig) -> Certificate:
    """Uniform iterative expansion: radius grows j*scale*std until verification fails."""
    return _run_method("pie", net, posterior, spec, params, cfg)


def certify_gie(net: NetworkDef, posterior: PosteriorParams,
                spec: RobustnessSpec, params: CertifyParams,
                cfg: VerifierConfig) -> Certificate:
    """Gradient-guided expansion: the margin gradient's sign partition boosts
    the growing faces by (1 + grad_scale); one gradient per draw."""
    return _run_method("gie", net, posterior, spec, params, cfg)


def run_budgeted_comparison(net: NetworkDef, posterior: PosteriorParams,
                            spec: RobustnessSpec, params: CertifyParams,
                            verifier_mode: str = "ibp",
                            sampling_scale: Optional[float] = None) -> dict[str, Certificate]:
    """All three methods on identical draws under identical call budgets.

    ``sampling_scale`` lets the baseline use its own tuned radius while the
    expansion methods keep ``params.scale``.
    """
    out: dict[str, Certificate] = {}
    for method, fn in (("sampling", certify_pure_sampling),
                       ("pie", certify_pie),
                       ("gie", certify_gie)):
        p = params
        if method == "sampling" and sampling_scale is not None:
            p = replace(params, scale=sampling_scale)
        out[method] = fn(net, posterior, spec, p, VerifierConfig(mode=verifier_mode))
    return out
